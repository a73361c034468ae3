"""Eavesdropper strategies on the quantum channel and information-gain analysis
of the public transcript."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .channel import PauliChannelParams, apply_pauli, sample_pauli, unpack_bits, unpack_u32s
from .qmath import (
    Basis,
    PureState,
    average_cloning_efficiency,
    identify_bb84,
    measure,
    mutual_information,
)

# Success probability of the probabilistic cloning machine, averaged over the
# BB84 source statistics (0.6679).
CLONE_SUCCESS_PROB = average_cloning_efficiency()


class AdversaryError(ValueError):
    """Invalid attack parameters or analysis over unusable data."""


class AttackKind(Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept_resend"
    CLONE_RESEND = "clone_resend"
    PAULI_TAMPER = "pauli_tamper"


@dataclass(frozen=True)
class AttackStrategy:
    """Which attack Eve runs, plus its parameters."""

    kind: AttackKind = AttackKind.NONE
    fraction: float = 1.0
    pauli: Optional[PauliChannelParams] = None

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise AdversaryError(f"interception fraction must be in [0, 1], got {self.fraction!r}")
        if self.kind is AttackKind.PAULI_TAMPER and self.pauli is None:
            raise AdversaryError("pauli_tamper requires channel parameters")

    @classmethod
    def none(cls) -> "AttackStrategy":
        return cls(AttackKind.NONE)

    @classmethod
    def intercept_resend(cls, fraction: float = 1.0) -> "AttackStrategy":
        return cls(AttackKind.INTERCEPT_RESEND, fraction=fraction)

    @classmethod
    def clone_resend(cls, fraction: float = 1.0) -> "AttackStrategy":
        return cls(AttackKind.CLONE_RESEND, fraction=fraction)

    @classmethod
    def pauli_tamper(cls, params: PauliChannelParams) -> "AttackStrategy":
        return cls(AttackKind.PAULI_TAMPER, pauli=params)


class EveRecord:
    """Eve's per-qubit observations during one session, aligned with the
    qubit index (an entry is appended for every qubit, intercepted or not)."""

    __slots__ = ("intercepted", "guesses", "bases", "clone_success", "pauli_applied")

    def __init__(self):
        self.intercepted: list[bool] = []
        self.guesses: list[Optional[int]] = []
        self.bases: list[Optional[int]] = []
        self.clone_success: list[Optional[bool]] = []
        self.pauli_applied: list[Optional[int]] = []

    def append(self, intercepted: bool, guess: Optional[int] = None,
               basis: Optional[int] = None, clone_success: Optional[bool] = None,
               pauli: Optional[int] = None) -> None:
        self.intercepted.append(intercepted)
        self.guesses.append(guess)
        self.bases.append(basis)
        self.clone_success.append(clone_success)
        self.pauli_applied.append(pauli)

    def __len__(self) -> int:
        return len(self.intercepted)

    @property
    def intercept_count(self) -> int:
        return sum(self.intercepted)

    @property
    def clone_success_count(self) -> int:
        return sum(1 for c in self.clone_success if c)

    def to_dict(self) -> dict:
        return {
            "intercepted": self.intercepted,
            "guesses": self.guesses,
            "bases": self.bases,
            "clone_success": self.clone_success,
            "pauli_applied": self.pauli_applied,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EveRecord":
        record = cls()
        record.intercepted = list(data["intercepted"])
        record.guesses = list(data["guesses"])
        record.bases = list(data["bases"])
        record.clone_success = [None if c is None else bool(c) for c in data["clone_success"]]
        record.pauli_applied = list(data["pauli_applied"])
        return record


def intercept_resend(state: PureState, rng: np.random.Generator) -> tuple[PureState, int, Basis]:
    """Measure in a uniformly random BB84 basis and resend the collapsed state."""
    basis = Basis.Z if rng.random() < 0.5 else Basis.X
    bit, eigenstate = measure(state, basis, rng)
    return eigenstate, bit, basis


def probabilistic_clone_resend(state: PureState,
                               rng: np.random.Generator) -> tuple[PureState, bool, int]:
    """Probabilistic cloning attack on one BB84 qubit.

    With probability 0.6679 the clone succeeds: Eve identifies the state
    exactly and resends it undisturbed.  Otherwise the cloning attempt destroys
    the state: Eve is left with a collapse in the conjugate basis, which tells
    her nothing about the encoded bit and leaves Bob's sifted bit uncorrelated
    half the time.  This reproduces the attack's three aggregate numbers:
    clone rate 0.6679, Eve bit rate 0.834 and sifted QBER 0.166.
    """
    basis, bit = identify_bb84(state)
    if rng.random() < CLONE_SUCCESS_PROB:
        return state, True, bit
    guess, eigenstate = measure(state, basis.conjugate(), rng)
    return eigenstate, False, guess


def apply_attack(strategy: AttackStrategy, state: PureState,
                 rng: np.random.Generator, record: EveRecord) -> PureState:
    """Run Eve's per-qubit action and log her observation."""
    kind = strategy.kind
    if kind is AttackKind.NONE:
        record.append(False)
        return state
    if strategy.fraction < 1.0 and rng.random() >= strategy.fraction:
        record.append(False)
        return state
    if kind is AttackKind.INTERCEPT_RESEND:
        resent, bit, basis = intercept_resend(state, rng)
        record.append(True, guess=bit, basis=basis.value)
        return resent
    if kind is AttackKind.CLONE_RESEND:
        resent, success, guess = probabilistic_clone_resend(state, rng)
        record.append(True, guess=guess, clone_success=success)
        return resent
    # Pauli tampering: Eve fixes a Pauli channel and remembers what she applied.
    which = sample_pauli(strategy.pauli, rng)
    record.append(True, pauli=which)
    return apply_pauli(state, which)


# ---------------------------------------------------------------------------
# Transcript analysis.
# ---------------------------------------------------------------------------


def unmasked_information_gain(final_key_length: int) -> float:
    """Bits Eve gains from a plaintext basis announcement: N/2."""
    _check_key_length(final_key_length)
    return final_key_length / 2


def transcript_net_information_gain(final_key_length: int) -> float:
    """Net gain when the announced lists are masked: N / 2^(N/2 + 1)."""
    _check_key_length(final_key_length)
    return final_key_length / 2 ** (final_key_length // 2 + 1)


def _check_key_length(n: int) -> None:
    if n < 2:
        raise AdversaryError(f"final key length must be at least 2, got {n!r}")
    if n % 2:
        raise AdversaryError(f"final key length must be even, got {n!r}")


def eve_observations(transcript, eve_record: EveRecord,
                     sifted_key_alice) -> tuple[list[tuple], list[int]]:
    """Eve's per-bit observation symbols for the final sifted positions, paired
    with the true key bits (the truth is supplied by the simulator; Eve herself
    only produces the symbols).

    With plaintext announcements Eve reads both basis lists, sifts, and tags
    each guess with whether her own measurement basis matched.  With masked
    announcements she only sees the masked lists; their agreement pattern still
    reveals which positions sift, but not the bases themselves.
    """
    plain = transcript.first("bases_alice") is not None
    est = transcript.first("est_positions")
    est_positions = unpack_u32s(est.payload) if est is not None else np.zeros(0, dtype=np.int64)

    if plain:
        bases_alice = unpack_bits(transcript.first("bases_alice").payload)
        bases_bob = unpack_bits(transcript.first("bases_bob").payload)
        sift_idx = np.flatnonzero(bases_alice == bases_bob)
        surviving_local = np.setdiff1d(np.arange(sift_idx.size), est_positions)
        positions = sift_idx[surviving_local]
        known_bases = bases_alice
    else:
        masked_alice = unpack_bits(transcript.first("masked_bases_alice").payload)
        masked_bob = unpack_bits(transcript.first("masked_bases_bob").payload)
        total = masked_alice.size + est_positions.size
        surviving = np.setdiff1d(np.arange(total), est_positions)
        positions = surviving[masked_alice == masked_bob]
        known_bases = None

    truth = np.asarray(sifted_key_alice, dtype=np.uint8)
    if truth.size != positions.size:
        raise AdversaryError("sifted key length does not match transcript-derived positions")

    symbols: list[tuple] = []
    for pos in positions:
        guess = eve_record.guesses[pos]
        if guess is None:
            symbols.append(("-",))
        elif eve_record.clone_success[pos] is not None:
            symbols.append((guess, "clone", bool(eve_record.clone_success[pos])))
        elif known_bases is not None and eve_record.bases[pos] is not None:
            symbols.append((guess, "match", eve_record.bases[pos] == int(known_bases[pos])))
        else:
            symbols.append((guess,))
    return symbols, truth.tolist()


def eve_mutual_information_from_parts(parts: Iterable[tuple]) -> float:
    """Empirical mutual information (bits per key bit) between Eve's observation
    symbols and the true sifted key bits, pooled over sessions.

    Each part is a (transcript, eve_record, sifted_key_alice) triple from a
    non-aborted session.
    """
    counts: dict[tuple, list[int]] = {}
    totals = [0, 0]
    used = 0
    for transcript, record, key in parts:
        symbols, truth = eve_observations(transcript, record, key)
        for sym, t in zip(symbols, truth):
            cell = counts.setdefault(sym, [0, 0])
            cell[t] += 1
            totals[t] += 1
        used += 1
    if used == 0:
        raise AdversaryError("no sessions to analyze")
    if totals[0] == 0 or totals[1] == 0:
        raise AdversaryError("need both key-bit values represented in the batch")
    alphabet = sorted(counts)
    p0 = np.array([counts[s][0] for s in alphabet], dtype=float) / totals[0]
    p1 = np.array([counts[s][1] for s in alphabet], dtype=float) / totals[1]
    total = totals[0] + totals[1]
    return mutual_information(p0, p1, totals[0] / total, totals[1] / total)


def eve_mutual_information_estimate(outcomes) -> float:
    """Batch estimator over SessionOutcome objects; aborted sessions are skipped."""
    parts = [(o.transcript, o.eve_record, o.sifted_key_alice)
             for o in outcomes if not o.aborted]
    if not parts:
        raise AdversaryError("no non-aborted sessions in the batch")
    return eve_mutual_information_from_parts(parts)
