"""Tests for the entanglement-based variant: singlet correlations, CHSH and
full sessions with masked analyzer announcements."""
import math

import numpy as np
import pytest

from qkdmask.adversary import AttackStrategy
from qkdmask.channel import RngSeeds, unpack_bits
from qkdmask.protocol import (
    ALICE_ANGLES,
    BOB_ANGLES,
    CHSH_PAIRS,
    CHSH_SINGLET,
    CorrelationRecord,
    ProtocolError,
    ReconciliationMode,
    SessionConfig,
    Variant,
    chsh_s,
    correlation_coefficient,
    decode_angle_indices,
    encode_angle_indices,
    generate_singlet_outcomes,
    run_e91_session,
    sample_singlet_correlation,
)


def e91_config(**overrides):
    base = dict(n=20000, k=1, e_max=1.0, L=0, variant=Variant.RANDOMIZED_E91,
                reconciliation_mode=ReconciliationMode.ORACLE,
                seeds=RngSeeds.from_base(21))
    base.update(overrides)
    return SessionConfig(**base)


class TestSingletOutcomes:
    def test_anticorrelation_cells_always_opposite(self):
        rng = np.random.default_rng(0)
        for i, j in ((2, 1), (3, 2)):
            for _ in range(500):
                r = generate_singlet_outcomes(i, j, rng)
                assert r.bob_outcome == -r.alice_outcome

    def test_alice_outcome_is_fair(self):
        rng = np.random.default_rng(1)
        trials = 20000
        plus = sum(generate_singlet_outcomes(1, 1, rng).alice_outcome == 1
                   for _ in range(trials))
        sigma = math.sqrt(trials * 0.25)
        assert abs(plus - trials / 2) < 4 * sigma

    def test_correlation_first_cell(self):
        # Singlet correlation E = -cos(a_1 - b_1) = -cos(-pi/4).
        e = sample_singlet_correlation(1, 1, 100_000, np.random.default_rng(2))
        assert e == pytest.approx(-math.cos(math.pi / 4), abs=0.01)

    def test_record_sampling_matches_vectorized_sampling(self):
        rng = np.random.default_rng(3)
        records = [generate_singlet_outcomes(1, 3, rng) for _ in range(20000)]
        e_records = correlation_coefficient(records)
        expected = -math.cos(ALICE_ANGLES[0] - BOB_ANGLES[2])
        assert e_records == pytest.approx(expected, abs=0.03)

    def test_bad_index_rejected(self):
        with pytest.raises(ProtocolError):
            generate_singlet_outcomes(0, 1, np.random.default_rng(0))


class TestCorrelationCoefficient:
    def test_fully_anticorrelated(self):
        records = [CorrelationRecord(2, 1, 1, -1)] * 10
        assert correlation_coefficient(records) == -1.0

    def test_symmetric_counts_give_zero(self):
        records = [CorrelationRecord(1, 1, a, b)
                   for a in (1, -1) for b in (1, -1)]
        assert correlation_coefficient(records) == 0.0

    def test_cross_cell_value(self):
        # E(a_1, b_3) = -cos(0 - 3pi/4) = +1/sqrt(2).
        rng = np.random.default_rng(4)
        records = [generate_singlet_outcomes(1, 3, rng) for _ in range(100_000)]
        assert correlation_coefficient(records) == pytest.approx(math.cos(math.pi / 4), abs=0.01)

    def test_empty_rejected(self):
        with pytest.raises(ProtocolError):
            correlation_coefficient([])

    def test_mixed_cells_rejected(self):
        with pytest.raises(ProtocolError):
            correlation_coefficient([CorrelationRecord(1, 1, 1, 1),
                                     CorrelationRecord(1, 2, 1, 1)])


class TestChsh:
    def test_ideal_singlets(self):
        rng = np.random.default_rng(5)
        grouped = {pair: [generate_singlet_outcomes(*pair, rng) for _ in range(50_000)]
                   for pair in CHSH_PAIRS}
        assert chsh_s(grouped) == pytest.approx(CHSH_SINGLET, abs=0.03)

    def test_independent_coins_give_zero(self):
        rng = np.random.default_rng(6)
        grouped = {}
        for pair in CHSH_PAIRS:
            a = np.where(rng.random(100_000) < 0.5, 1, -1)
            b = np.where(rng.random(100_000) < 0.5, 1, -1)
            grouped[pair] = [CorrelationRecord(*pair, int(x), int(y)) for x, y in zip(a, b)]
        assert chsh_s(grouped) == pytest.approx(0.0, abs=0.04)

    def test_local_model_stays_inside_quantum_bound(self):
        # Deterministic shared-angle model: |S| <= 2 < 2*sqrt(2).
        rng = np.random.default_rng(7)
        grouped = {}
        for (i, j) in CHSH_PAIRS:
            lam = rng.random(50_000) * 2 * math.pi
            a = np.where(np.cos(ALICE_ANGLES[i - 1] - lam) >= 0, 1, -1)
            b = -np.where(np.cos(BOB_ANGLES[j - 1] - lam) >= 0, 1, -1)
            grouped[(i, j)] = [CorrelationRecord(i, j, int(x), int(y)) for x, y in zip(a, b)]
        s = chsh_s(grouped)
        assert abs(s) < 2 * math.sqrt(2) - 0.5

    def test_missing_group_rejected(self):
        with pytest.raises(ProtocolError):
            chsh_s({(1, 1): [CorrelationRecord(1, 1, 1, 1)]})


class TestAngleEncoding:
    def test_roundtrip(self):
        idx = np.array([1, 2, 3, 3, 2, 1])
        assert np.array_equal(decode_angle_indices(encode_angle_indices(idx)), idx)

    def test_bit_layout(self):
        assert encode_angle_indices(np.array([1, 2, 3])).tolist() == [0, 1, 1, 0, 1, 1]


class TestE91Session:
    def test_ideal_run(self):
        outcome = run_e91_session(e91_config())
        assert not outcome.aborted
        assert np.array_equal(outcome.sifted_key_alice, outcome.sifted_key_bob)
        assert outcome.sifted_qber == 0.0
        assert outcome.chsh_value == pytest.approx(CHSH_SINGLET, abs=0.1)
        # Same-angle pairs are (2,1) and (3,2): 2 of the 9 index combinations.
        assert outcome.sifted_fraction == pytest.approx(2 / 9, abs=0.02)

    def test_tampered_source_aborts(self):
        outcome = run_e91_session(e91_config(attack=AttackStrategy.intercept_resend()))
        assert outcome.aborted
        assert abs(outcome.chsh_value) <= 2.1

    def test_masked_lists_differ_from_raw(self):
        outcome = run_e91_session(e91_config())
        masked_a = unpack_bits(outcome.transcript.first("masked_angles_alice").payload)
        from qkdmask.protocol import encode_angle_indices as enc
        raw_a = enc(outcome.bases_alice.astype(np.int64))
        assert not np.array_equal(masked_a, raw_a)

    def test_determinism(self):
        a = run_e91_session(e91_config())
        b = run_e91_session(e91_config())
        assert a.transcript.serialize() == b.transcript.serialize()
        assert a.chsh_value == b.chsh_value
        assert np.array_equal(a.sifted_key_alice, b.sifted_key_alice)

    def test_wrong_variant_rejected(self):
        with pytest.raises(ProtocolError):
            run_e91_session(e91_config(variant=Variant.RANDOMIZED))
