"""The masked-bases QKD protocol (plain BB84 as baseline), including error
estimation, parity-subset reconciliation, XOR masking and sifting, plus the
entanglement-based variant with masked analyzer announcement and CHSH
verification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .adversary import AttackKind, AttackStrategy, EveRecord, apply_attack
from .channel import (
    IDEAL_CHANNEL,
    PauliChannelParams,
    RngSeeds,
    Transcript,
    pack_bits,
    pack_u32s,
    transmit,
)
from .qmath import Basis, PureState, make_bb84_state, measure

CHSH_SINGLET = -2 * math.sqrt(2)

# Analyzer angle tables (1-indexed) for the entanglement variant.
ALICE_ANGLES = np.array([0.0, math.pi / 4, math.pi / 2])
BOB_ANGLES = np.array([math.pi / 4, math.pi / 2, 3 * math.pi / 4])

_BASIS_BY_BIT = (Basis.Z, Basis.X)


class ProtocolError(ValueError):
    """Invalid configuration or operation arguments."""


class Variant(Enum):
    PLAIN_BB84 = "plain_bb84"
    RANDOMIZED = "randomized"
    RANDOMIZED_E91 = "randomized_e91"


class ReconciliationMode(Enum):
    PARITY_EXCHANGE = "parity"
    ORACLE = "oracle"


class AbortReason(Enum):
    ESTIMATION_FAILED = "estimation_failed"
    PARITY_MISMATCH = "parity_mismatch"
    CHSH_VIOLATION_TOO_SMALL = "chsh_violation_too_small"


class ProtocolAbort(Exception):
    def __init__(self, reason: AbortReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason


@dataclass(frozen=True)
class SessionConfig:
    """Parameters of one protocol run."""

    n: int
    k: int
    e_max: float
    L: int
    variant: Variant
    reconciliation_mode: ReconciliationMode = ReconciliationMode.PARITY_EXCHANGE
    channel: PauliChannelParams = IDEAL_CHANNEL
    attack: AttackStrategy = field(default_factory=AttackStrategy.none)
    seeds: RngSeeds = field(default_factory=lambda: RngSeeds.from_base(0))

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise ProtocolError(f"need 0 < k < n, got k={self.k}, n={self.n}")
        if not 0.0 <= self.e_max <= 1.0:
            raise ProtocolError(f"e_max must be in [0, 1], got {self.e_max!r}")
        if self.L < 0:
            raise ProtocolError(f"L must be nonnegative, got {self.L!r}")


@dataclass
class SessionOutcome:
    """Results of one run, including ground-truth bookkeeping for analysis."""

    aborted: bool
    abort_reason: Optional[AbortReason]
    sifted_key_alice: np.ndarray
    sifted_key_bob: np.ndarray
    final_key: np.ndarray
    qber_estimate: float
    sifted_qber: float
    sifted_fraction: float
    transcript: Transcript
    eve_record: EveRecord
    leaked_bits: int
    bases_alice: np.ndarray
    bases_bob: np.ndarray
    raw_alice: np.ndarray
    raw_bob: np.ndarray
    surviving_positions: np.ndarray
    sifted_positions: np.ndarray
    chsh_value: Optional[float] = None


def alice_prepare(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, list[PureState]]:
    """Random bases, random bits and the corresponding BB84 states (0 -> Z, 1 -> X)."""
    if n < 1:
        raise ProtocolError(f"n must be at least 1, got {n!r}")
    bases = rng.integers(0, 2, n, dtype=np.uint8)
    bits = rng.integers(0, 2, n, dtype=np.uint8)
    states = [make_bb84_state(_BASIS_BY_BIT[b], int(v)) for b, v in zip(bases, bits)]
    return bases, bits, states


def bob_measure(qubits: Sequence[PureState], rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Measure each delivered qubit in a fresh random basis."""
    n = len(qubits)
    bases = rng.integers(0, 2, n, dtype=np.uint8)
    observed = np.empty(n, dtype=np.uint8)
    for i, q in enumerate(qubits):
        bit, _ = measure(q, _BASIS_BY_BIT[bases[i]], rng)
        observed[i] = bit
    return bases, observed


def estimate_error(key_alice: np.ndarray, key_bob: np.ndarray, k: int, e_max: float,
                   rng: np.random.Generator, transcript: Transcript) -> tuple[float, np.ndarray]:
    """Publish k random positions of both keys, compute the sample error rate and
    abort when it exceeds e_max.  Returns (e, surviving positions)."""
    p = len(key_alice)
    if len(key_bob) != p:
        raise ProtocolError("key lengths differ")
    if not 0 < k < p:
        raise ProtocolError(f"need 0 < k < len(key), got k={k}, len={p}")
    positions = np.sort(rng.choice(p, size=k, replace=False)).astype(np.int64)
    transcript.publish("alice", "est_positions", pack_u32s(positions))
    transcript.publish("alice", "est_bits_alice", pack_bits(key_alice[positions]))
    transcript.publish("bob", "est_bits_bob", pack_bits(key_bob[positions]))
    e = float(np.mean(key_alice[positions] != key_bob[positions]))
    surviving = np.setdiff1d(np.arange(p), positions)
    if e > e_max:
        transcript.publish("alice", "abort", b"estimation")
        exc = ProtocolAbort(AbortReason.ESTIMATION_FAILED, f"e={e:.4f} > e_max={e_max:.4f}")
        exc.error_rate = e
        raise exc
    return e, surviving


def reconcile(key_alice: np.ndarray, key_bob: np.ndarray, L: int, mode: ReconciliationMode,
              rng: np.random.Generator, transcript: Transcript) -> tuple[np.ndarray, int]:
    """Make the two raw keys common, or abort.

    Parity exchange: Alice publishes L uniformly random subsets and their
    parities; any mismatch aborts, otherwise the common key is Bob's string and
    L parity bits have leaked.  Oracle mode hands Alice's string to both sides
    with no leak, standing in for idealized exact error correction.
    """
    p = len(key_alice)
    if len(key_bob) != p:
        raise ProtocolError("key lengths differ")
    if mode is ReconciliationMode.ORACLE:
        return key_alice.copy(), 0
    for _ in range(L):
        subset = rng.integers(0, 2, p, dtype=np.uint8)
        parity_alice = int(np.bitwise_xor.reduce(key_alice[subset == 1])) if subset.any() else 0
        parity_bob = int(np.bitwise_xor.reduce(key_bob[subset == 1])) if subset.any() else 0
        transcript.publish("alice", "parity_subset", pack_bits(subset))
        transcript.publish("alice", "parity_value", bytes([parity_alice]))
        transcript.publish("bob", "parity_ack", bytes([1 if parity_bob == parity_alice else 0]))
        if parity_bob != parity_alice:
            transcript.publish("bob", "abort", b"parity")
            raise ProtocolAbort(AbortReason.PARITY_MISMATCH)
    return key_bob.copy(), L


def randomize_bases(bases: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Mask a basis list by elementwise XOR with key bits (broadcasts over
    leading axes)."""
    bases = np.asarray(bases, dtype=np.uint8)
    key = np.asarray(key, dtype=np.uint8)
    if bases.shape[-1] != key.shape[-1]:
        raise ProtocolError(f"length mismatch: {bases.shape[-1]} vs {key.shape[-1]}")
    return np.bitwise_xor(bases, key)


def recover_bases(masked: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Invert the mask; XOR is an involution so this is the same operation."""
    return randomize_bases(masked, key)


def sift(bases_alice: np.ndarray, bases_bob: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Keep bits where the two basis choices agree, order preserved."""
    a = np.asarray(bases_alice)
    b = np.asarray(bases_bob)
    v = np.asarray(bits)
    if a.shape != b.shape or a.shape != v.shape:
        raise ProtocolError("length mismatch")
    return v[a == b]


def _quantum_phase(config: SessionConfig):
    rng_a, rng_b, rng_e, rng_c = config.seeds.generators()
    eve = EveRecord()
    bases_a, raw_a, states = alice_prepare(config.n, rng_a)
    attack = config.attack
    channel_params = config.channel
    ideal = (channel_params.p_x == 0.0 and channel_params.p_y == 0.0 and channel_params.p_z == 0.0)
    if attack.kind is AttackKind.NONE and ideal:
        delivered = states
        for _ in range(config.n):
            eve.append(False)
    else:
        delivered = [transmit(apply_attack(attack, q, rng_e, eve), channel_params, rng_c)
                     for q in states]
    bases_b, raw_b = bob_measure(delivered, rng_b)
    return rng_a, eve, bases_a, raw_a, bases_b, raw_b


def _empty_bits() -> np.ndarray:
    return np.zeros(0, dtype=np.uint8)


def run_session(config: SessionConfig) -> SessionOutcome:
    """One full prepare-and-measure session (masked or plain announcement)."""
    if config.variant is Variant.RANDOMIZED_E91:
        return run_e91_session(config)
    rng_a, eve, bases_a, raw_a, bases_b, raw_b = _quantum_phase(config)
    transcript = Transcript()
    qber_estimate = math.nan
    leaked = 0
    try:
        if config.variant is Variant.RANDOMIZED:
            leaked = config.k  # estimation publishes its sample even on abort
            qber_estimate, surviving = estimate_error(
                raw_a, raw_b, config.k, config.e_max, rng_a, transcript)
            a_s, b_s = bases_a[surviving], bases_b[surviving]
            ka_s, kb_s = raw_a[surviving], raw_b[surviving]
            common, reconcile_leak = reconcile(
                ka_s, kb_s, config.L, config.reconciliation_mode, rng_a, transcript)
            leaked += reconcile_leak
            masked_a = randomize_bases(a_s, common)
            masked_b = randomize_bases(b_s, common)
            transcript.publish("alice", "masked_bases_alice", pack_bits(masked_a))
            transcript.publish("bob", "masked_bases_bob", pack_bits(masked_b))
            # Each side unmasks the other's list; exact because XOR is an involution.
            recovered_b = recover_bases(masked_b, common)
            recovered_a = recover_bases(masked_a, common)
            agree = recovered_a == recovered_b
            sifted_alice = ka_s[agree]
            sifted_bob = kb_s[agree]
            final_key = common[agree]
            sifted_fraction = float(agree.mean()) if agree.size else 0.0
            sifted_positions = surviving[agree]
        else:  # plain BB84 baseline: announce bases, sift, then estimate/reconcile
            transcript.publish("alice", "bases_alice", pack_bits(bases_a))
            transcript.publish("bob", "bases_bob", pack_bits(bases_b))
            agree = bases_a == bases_b
            sift_idx = np.flatnonzero(agree)
            sifted_a_all = raw_a[sift_idx]
            sifted_b_all = raw_b[sift_idx]
            sifted_fraction = float(agree.mean())
            leaked = config.k
            qber_estimate, surviving_local = estimate_error(
                sifted_a_all, sifted_b_all, config.k, config.e_max, rng_a, transcript)
            sifted_alice = sifted_a_all[surviving_local]
            sifted_bob = sifted_b_all[surviving_local]
            final_key, reconcile_leak = reconcile(
                sifted_alice, sifted_bob, config.L, config.reconciliation_mode, rng_a, transcript)
            leaked += reconcile_leak
            surviving = sift_idx[surviving_local]
            sifted_positions = surviving
    except ProtocolAbort as abort:
        return SessionOutcome(
            aborted=True, abort_reason=abort.reason,
            sifted_key_alice=_empty_bits(), sifted_key_bob=_empty_bits(),
            final_key=_empty_bits(),
            qber_estimate=getattr(abort, "error_rate", qber_estimate),
            sifted_qber=math.nan, sifted_fraction=math.nan,
            transcript=transcript, eve_record=eve, leaked_bits=leaked,
            bases_alice=bases_a, bases_bob=bases_b,
            raw_alice=raw_a, raw_bob=raw_b,
            surviving_positions=np.zeros(0, dtype=np.int64),
            sifted_positions=np.zeros(0, dtype=np.int64),
        )
    sifted_qber = float(np.mean(sifted_alice != sifted_bob)) if sifted_alice.size else 0.0
    return SessionOutcome(
        aborted=False, abort_reason=None,
        sifted_key_alice=sifted_alice, sifted_key_bob=sifted_bob, final_key=final_key,
        qber_estimate=qber_estimate, sifted_qber=sifted_qber, sifted_fraction=sifted_fraction,
        transcript=transcript, eve_record=eve, leaked_bits=leaked,
        bases_alice=bases_a, bases_bob=bases_b, raw_alice=raw_a, raw_bob=raw_b,
        surviving_positions=surviving, sifted_positions=sifted_positions,
    )


# ---------------------------------------------------------------------------
# Entanglement-based variant.
# ---------------------------------------------------------------------------


class CorrelationRecord(NamedTuple):
    """One singlet pair: analyzer choices (1..3 each) and the two +/-1 outcomes."""

    alice_angle_index: int
    bob_angle_index: int
    alice_outcome: int
    bob_outcome: int


def _check_angle_index(i: int, j: int) -> None:
    if i not in (1, 2, 3) or j not in (1, 2, 3):
        raise ProtocolError(f"angle indices must be in 1..3, got ({i!r}, {j!r})")


def generate_singlet_outcomes(i: int, j: int, rng: np.random.Generator) -> CorrelationRecord:
    """Sample one singlet pair measured along angles (a_i, b_j).

    Alice's outcome is a fair +/-1; Bob's equals hers with probability
    (1 - cos(a_i - b_j)) / 2, so the correlation converges to -cos(a_i - b_j).
    """
    _check_angle_index(i, j)
    alice = 1 if rng.random() < 0.5 else -1
    same_prob = 0.5 * (1.0 - math.cos(ALICE_ANGLES[i - 1] - BOB_ANGLES[j - 1]))
    bob = alice if rng.random() < same_prob else -alice
    return CorrelationRecord(i, j, alice, bob)


def correlation_coefficient(records: Sequence[CorrelationRecord]) -> float:
    """(N++ + N-- - N+- - N-+) / N over records sharing one (i, j) pair."""
    if not records:
        raise ProtocolError("need at least one record")
    pair = (records[0].alice_angle_index, records[0].bob_angle_index)
    total = 0
    for r in records:
        if (r.alice_angle_index, r.bob_angle_index) != pair:
            raise ProtocolError("records mix different analyzer pairs")
        total += r.alice_outcome * r.bob_outcome
    return total / len(records)


def correlation_from_counts(n_pp: int, n_mm: int, n_pm: int, n_mp: int) -> float:
    total = n_pp + n_mm + n_pm + n_mp
    if total == 0:
        raise ProtocolError("need at least one record")
    return (n_pp + n_mm - n_pm - n_mp) / total


CHSH_PAIRS = ((1, 1), (1, 3), (3, 1), (3, 3))
CHSH_SIGNS = (1, -1, 1, 1)


def chsh_s(grouped: dict[tuple[int, int], Sequence[CorrelationRecord]]) -> float:
    """S = E(a1,b1) - E(a1,b3) + E(a3,b1) + E(a3,b3)."""
    missing = [p for p in CHSH_PAIRS if not grouped.get(p)]
    if missing:
        raise ProtocolError(f"missing CHSH groups: {missing}")
    return sum(sign * correlation_coefficient(grouped[pair])
               for pair, sign in zip(CHSH_PAIRS, CHSH_SIGNS))


def sample_singlet_correlation(i: int, j: int, count: int,
                               rng: np.random.Generator) -> float:
    """Monte Carlo estimate of E(a_i, b_j) over ``count`` singlet pairs
    (vectorized; statistically identical to repeated single-pair sampling)."""
    _check_angle_index(i, j)
    if count < 1:
        raise ProtocolError("count must be positive")
    alice = np.where(rng.random(count) < 0.5, 1, -1)
    same_prob = 0.5 * (1.0 - math.cos(ALICE_ANGLES[i - 1] - BOB_ANGLES[j - 1]))
    bob = np.where(rng.random(count) < same_prob, alice, -alice)
    return float(np.mean(alice * bob))


def encode_angle_indices(indices: np.ndarray) -> np.ndarray:
    """2 bits per pair, most significant first (1 -> 01, 2 -> 10, 3 -> 11)."""
    idx = np.asarray(indices, dtype=np.uint8)
    out = np.empty(2 * idx.size, dtype=np.uint8)
    out[0::2] = idx >> 1
    out[1::2] = idx & 1
    return out


def decode_angle_indices(bits: np.ndarray) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.size % 2:
        raise ProtocolError("angle bit stream must have even length")
    return (b[0::2] << 1) | b[1::2]


def _cyclic_mask(key: np.ndarray, length: int) -> np.ndarray:
    """Key bits repeated cyclically to cover ``length`` mask bits."""
    if key.size == 0:
        raise ProtocolError("empty key cannot mask an announcement")
    reps = -(-length // key.size)
    return np.tile(key, reps)[:length]


def run_e91_session(config: SessionConfig) -> SessionOutcome:
    """Entanglement-based session: singlet source, random analyzer choices,
    masked announcement of the analyzer lists and CHSH verification."""
    if config.variant is not Variant.RANDOMIZED_E91:
        raise ProtocolError("config variant must be randomized_e91")
    rng_a, rng_b, rng_e, rng_src = config.seeds.generators()
    transcript = Transcript()
    eve = EveRecord()
    n = config.n
    idx_a = rng_a.integers(1, 4, n, dtype=np.int64)
    idx_b = rng_b.integers(1, 4, n, dtype=np.int64)
    phi_a = ALICE_ANGLES[idx_a - 1]
    phi_b = BOB_ANGLES[idx_b - 1]
    if config.attack.kind is AttackKind.NONE:
        out_a = np.where(rng_src.random(n) < 0.5, 1, -1)
        same_prob = 0.5 * (1.0 - np.cos(phi_a - phi_b))
        out_b = np.where(rng_src.random(n) < same_prob, out_a, -out_a)
    else:
        # Tampered source: a local hidden-variable model replaces the singlets.
        # Outcomes are deterministic in a shared random angle, so |S| <= 2.
        lam = rng_e.random(n) * 2 * math.pi
        out_a = np.where(np.cos(phi_a - lam) >= 0, 1, -1)
        out_b = -np.where(np.cos(phi_b - lam) >= 0, 1, -1)
    raw_a = (out_a > 0).astype(np.uint8)
    raw_b = (out_b > 0).astype(np.uint8)
    leaked = 0
    try:
        common, leaked = reconcile(raw_a, raw_b, config.L, config.reconciliation_mode,
                                   rng_a, transcript)
        mask = _cyclic_mask(common, 2 * n)
        masked_a = randomize_bases(encode_angle_indices(idx_a), mask)
        masked_b = randomize_bases(encode_angle_indices(idx_b), mask)
        transcript.publish("alice", "masked_angles_alice", pack_bits(masked_a))
        transcript.publish("bob", "masked_angles_bob", pack_bits(masked_b))
        recovered_a = decode_angle_indices(recover_bases(masked_a, mask))
        recovered_b = decode_angle_indices(recover_bases(masked_b, mask))
        same_basis = np.isclose(ALICE_ANGLES[recovered_a - 1], BOB_ANGLES[recovered_b - 1])
        # Key material from equal-angle pairs; Bob flips to undo anticorrelation.
        sifted_alice = raw_a[same_basis]
        sifted_bob = (1 - raw_b[same_basis]).astype(np.uint8)
        # CHSH check on the different-angle groups.
        s_value = 0.0
        variance = 0.0
        for (i, j), sign in zip(CHSH_PAIRS, CHSH_SIGNS):
            cell = (recovered_a == i) & (recovered_b == j)
            count = int(cell.sum())
            if count == 0:
                raise ProtocolError(f"no pairs in CHSH cell ({i}, {j}); increase n")
            e_val = float(np.mean(out_a[cell] * out_b[cell]))
            s_value += sign * e_val
            variance += max(1.0 - e_val * e_val, 0.0) / count
        sigma_s = math.sqrt(variance)
        threshold = max(0.2, 5 * sigma_s)
        if abs(s_value - CHSH_SINGLET) > threshold:
            transcript.publish("alice", "abort", b"chsh")
            exc = ProtocolAbort(AbortReason.CHSH_VIOLATION_TOO_SMALL,
                                f"S={s_value:.4f}, threshold={threshold:.4f}")
            exc.chsh_value = s_value
            raise exc
    except ProtocolAbort as abort:
        return SessionOutcome(
            aborted=True, abort_reason=abort.reason,
            sifted_key_alice=_empty_bits(), sifted_key_bob=_empty_bits(),
            final_key=_empty_bits(), qber_estimate=math.nan, sifted_qber=math.nan,
            sifted_fraction=math.nan, transcript=transcript, eve_record=eve,
            leaked_bits=leaked, bases_alice=idx_a.astype(np.uint8),
            bases_bob=idx_b.astype(np.uint8), raw_alice=raw_a, raw_bob=raw_b,
            surviving_positions=np.zeros(0, dtype=np.int64),
            sifted_positions=np.zeros(0, dtype=np.int64),
            chsh_value=getattr(abort, "chsh_value", None),
        )
    sifted_qber = float(np.mean(sifted_alice != sifted_bob)) if sifted_alice.size else 0.0
    return SessionOutcome(
        aborted=False, abort_reason=None,
        sifted_key_alice=sifted_alice, sifted_key_bob=sifted_bob,
        final_key=sifted_alice.copy(), qber_estimate=sifted_qber, sifted_qber=sifted_qber,
        sifted_fraction=float(same_basis.mean()), transcript=transcript, eve_record=eve,
        leaked_bits=leaked, bases_alice=idx_a.astype(np.uint8), bases_bob=idx_b.astype(np.uint8),
        raw_alice=raw_a, raw_bob=raw_b,
        surviving_positions=np.flatnonzero(same_basis),
        sifted_positions=np.flatnonzero(same_basis),
        chsh_value=s_value,
    )
