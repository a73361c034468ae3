"""Quantum channel (ideal or Pauli noise), authenticated public transcript and
per-party seeded randomness."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .qmath import PureState

_MASK64 = (1 << 64) - 1


class ChannelError(ValueError):
    """Invalid channel parameters or malformed transcript data."""


@dataclass(frozen=True)
class PauliChannelParams:
    """Per-qubit probabilities of X, Y and Z errors; identity fills the rest."""

    p_x: float = 0.0
    p_y: float = 0.0
    p_z: float = 0.0

    def __post_init__(self):
        for name in ("p_x", "p_y", "p_z"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ChannelError(f"{name} must be in [0, 1], got {p!r}")
        if self.p_x + self.p_y + self.p_z > 1.0 + 1e-12:
            raise ChannelError("p_x + p_y + p_z must not exceed 1")

    @property
    def p_i(self) -> float:
        return 1.0 - self.p_x - self.p_y - self.p_z


IDEAL_CHANNEL = PauliChannelParams()


def apply_pauli(state: PureState, which: int) -> PureState:
    """Apply I (0), X (1), Y (2) or Z (3) to a pure state."""
    if which == 0:
        return state
    if which == 1:
        return PureState(state.amp1, state.amp0)
    if which == 2:
        return PureState(-1j * state.amp1, 1j * state.amp0)
    if which == 3:
        return PureState(state.amp0, -state.amp1)
    raise ChannelError(f"Pauli index must be 0..3, got {which!r}")


def sample_pauli(params: PauliChannelParams, rng: np.random.Generator) -> int:
    """Draw a Pauli index according to the channel parameters."""
    u = rng.random()
    if u < params.p_x:
        return 1
    if u < params.p_x + params.p_y:
        return 2
    if u < params.p_x + params.p_y + params.p_z:
        return 3
    return 0


def transmit(state: PureState, params: PauliChannelParams, rng: np.random.Generator) -> PureState:
    """Send one qubit through the Pauli channel."""
    if params.p_x == 0.0 and params.p_y == 0.0 and params.p_z == 0.0:
        return state
    return apply_pauli(state, sample_pauli(params, rng))


# ---------------------------------------------------------------------------
# Public classical channel.
#
# Wire format: newline-delimited records "seq,sender,kind,hex(payload)".
# Bit-string payloads carry a 4-byte big-endian bit count followed by the bits
# packed MSB-first; u32 payloads are big-endian 4-byte integers.
# ---------------------------------------------------------------------------


def pack_bits(bits) -> bytes:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1:
        raise ChannelError("bit payload must be 1-D")
    packed = np.packbits(arr).tobytes() if arr.size else b""
    return len(arr).to_bytes(4, "big") + packed


def unpack_bits(payload: bytes) -> np.ndarray:
    if len(payload) < 4:
        raise ChannelError("bit payload too short")
    n = int.from_bytes(payload[:4], "big")
    if n == 0:
        return np.zeros(0, dtype=np.uint8)
    raw = np.frombuffer(payload[4:], dtype=np.uint8)
    bits = np.unpackbits(raw)
    if bits.size < n:
        raise ChannelError("bit payload truncated")
    return bits[:n].copy()


def pack_u32s(values) -> bytes:
    return np.asarray(values, dtype=">u4").tobytes()


def unpack_u32s(payload: bytes) -> np.ndarray:
    if len(payload) % 4:
        raise ChannelError("u32 payload length must be a multiple of 4")
    return np.frombuffer(payload, dtype=">u4").astype(np.int64)


@dataclass(frozen=True)
class TranscriptRecord:
    seq: int
    sender: str
    kind: str
    payload: bytes

    def to_line(self) -> str:
        return f"{self.seq},{self.sender},{self.kind},{self.payload.hex()}"

    @classmethod
    def from_line(cls, line: str) -> "TranscriptRecord":
        parts = line.split(",")
        if len(parts) != 4:
            raise ChannelError(f"malformed transcript line: {line!r}")
        seq, sender, kind, payload_hex = parts
        return cls(int(seq), sender, kind, bytes.fromhex(payload_hex))


class Transcript:
    """Append-only record of everything published on the classical channel.

    The channel is authenticated: records cannot be modified or forged, and an
    eavesdropper may read but never write.
    """

    __slots__ = ("records",)

    def __init__(self, records: Sequence[TranscriptRecord] = ()):
        self.records: list[TranscriptRecord] = list(records)

    def publish(self, sender: str, kind: str, payload: bytes) -> TranscriptRecord:
        record = TranscriptRecord(len(self.records), sender, kind, bytes(payload))
        self.records.append(record)
        return record

    def first(self, kind: str) -> TranscriptRecord | None:
        for record in self.records:
            if record.kind == kind:
                return record
        return None

    def all_of(self, kind: str) -> list[TranscriptRecord]:
        return [r for r in self.records if r.kind == kind]

    def serialize(self) -> str:
        return "\n".join(r.to_line() for r in self.records) + ("\n" if self.records else "")

    @classmethod
    def parse(cls, text: str) -> "Transcript":
        records = [TranscriptRecord.from_line(line) for line in text.splitlines() if line]
        return cls(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TranscriptRecord]:
        return iter(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, Transcript) and self.records == other.records


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngSeeds:
    """Independent 64-bit seed per party; identical seeds and config give a
    bit-identical session."""

    alice: int
    bob: int
    eve: int
    channel: int

    def __post_init__(self):
        for name in ("alice", "bob", "eve", "channel"):
            v = getattr(self, name)
            if not 0 <= v <= _MASK64:
                raise ChannelError(f"{name} seed must fit in 64 bits, got {v!r}")

    @classmethod
    def from_base(cls, base: int) -> "RngSeeds":
        base &= _MASK64
        return cls(
            alice=_splitmix64(base),
            bob=_splitmix64(base + 1),
            eve=_splitmix64(base + 2),
            channel=_splitmix64(base + 3),
        )

    def generators(self) -> tuple[np.random.Generator, ...]:
        """(alice, bob, eve, channel) generators."""
        return tuple(np.random.default_rng(s) for s in (self.alice, self.bob, self.eve, self.channel))
