"""Tests for the Pauli channel, transcript wire format and seeding."""
import math

import numpy as np
import pytest

from qkdmask.channel import (
    ChannelError,
    IDEAL_CHANNEL,
    PauliChannelParams,
    RngSeeds,
    Transcript,
    TranscriptRecord,
    apply_pauli,
    pack_bits,
    pack_u32s,
    transmit,
    unpack_bits,
    unpack_u32s,
)
from qkdmask.qmath import Basis, KET0, KET1, KET_PLUS, measure


class TestPauliChannelParams:
    def test_defaults_are_ideal(self):
        assert IDEAL_CHANNEL.p_i == 1.0

    def test_rejects_out_of_range(self):
        with pytest.raises(ChannelError):
            PauliChannelParams(p_x=-0.1)
        with pytest.raises(ChannelError):
            PauliChannelParams(p_x=0.6, p_z=0.6)

    def test_probabilities_sum_to_one(self):
        p = PauliChannelParams(p_x=0.1, p_y=0.2, p_z=0.3)
        assert p.p_i + p.p_x + p.p_y + p.p_z == pytest.approx(1.0)


class TestTransmit:
    def test_ideal_channel_is_identity(self):
        rng = np.random.default_rng(0)
        for state in (KET0, KET1, KET_PLUS):
            assert transmit(state, IDEAL_CHANNEL, rng) is state

    def test_deterministic_bit_flip(self):
        rng = np.random.default_rng(1)
        out = transmit(KET0, PauliChannelParams(p_x=1.0), rng)
        assert out.approx_eq(KET1)

    def test_phase_flip_rate_on_plus(self):
        # Z flips the X-basis bit; binomial bound at p = 0.1.
        rng = np.random.default_rng(2)
        params = PauliChannelParams(p_z=0.1)
        trials = 100_000
        flips = sum(measure(transmit(KET_PLUS, params, rng), Basis.X, rng)[0]
                    for _ in range(trials))
        sigma = math.sqrt(trials * 0.1 * 0.9)
        assert abs(flips - trials * 0.1) < 3 * sigma

    def test_apply_pauli_rejects_bad_index(self):
        with pytest.raises(ChannelError):
            apply_pauli(KET0, 4)


class TestBitPacking:
    @pytest.mark.parametrize("length", [0, 1, 7, 8, 9, 63, 1000])
    def test_roundtrip(self, length):
        rng = np.random.default_rng(length)
        bits = rng.integers(0, 2, length, dtype=np.uint8)
        assert np.array_equal(unpack_bits(pack_bits(bits)), bits)

    def test_u32_roundtrip(self):
        values = [0, 1, 2 ** 32 - 1, 12345]
        assert unpack_u32s(pack_u32s(values)).tolist() == values


class TestTranscript:
    def test_append_and_order(self):
        t = Transcript()
        t.publish("alice", "hello", b"\x01")
        t.publish("bob", "world", b"\x02")
        assert len(t) == 2
        assert [r.kind for r in t] == ["hello", "world"]
        assert [r.seq for r in t] == [0, 1]

    def test_serialize_parse_roundtrip(self):
        t = Transcript()
        t.publish("alice", "bits", pack_bits([1, 0, 1]))
        t.publish("bob", "empty", b"")
        t.publish("alice", "idx", pack_u32s([7, 9]))
        assert Transcript.parse(t.serialize()) == t

    def test_record_line_roundtrip(self):
        r = TranscriptRecord(3, "eve", "note", b"\xde\xad")
        assert TranscriptRecord.from_line(r.to_line()) == r

    def test_malformed_line_rejected(self):
        with pytest.raises(ChannelError):
            TranscriptRecord.from_line("not a record")


class TestRngSeeds:
    def test_from_base_is_stable(self):
        assert RngSeeds.from_base(42) == RngSeeds.from_base(42)
        assert RngSeeds.from_base(42) != RngSeeds.from_base(43)

    def test_party_streams_differ(self):
        seeds = RngSeeds.from_base(0)
        assert len({seeds.alice, seeds.bob, seeds.eve, seeds.channel}) == 4

    def test_rejects_oversized_seed(self):
        with pytest.raises(ChannelError):
            RngSeeds(alice=1 << 64, bob=0, eve=0, channel=0)
