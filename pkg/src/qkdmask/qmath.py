"""Single-qubit quantum math: states, density matrices, measurement sampling and
distinguishability / information measures.

Everything here is fixed at dimension 2 (dimension 4 only for the joint system
handled by :func:`partial_trace_b`).  States in flight are pure and kept as two
complex amplitudes; density matrices are used for analysis only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np

# Tolerances: algebraic invariants vs. derived quantities.
ATOL_ALG = 1e-12
ATOL_DERIVED = 1e-9

_SQRT_HALF = math.sqrt(0.5)


class QMathError(ValueError):
    """Raised when a quantum object violates its construction invariants."""


class PureState:
    """A normalized single-qubit state ``amp0|0> + amp1|1>``."""

    __slots__ = ("amp0", "amp1")

    def __init__(self, amp0: complex, amp1: complex):
        a0 = complex(amp0)
        a1 = complex(amp1)
        norm = a0.real * a0.real + a0.imag * a0.imag + a1.real * a1.real + a1.imag * a1.imag
        if abs(norm - 1.0) > 1e-12:
            raise QMathError(f"state not normalized: |amp0|^2+|amp1|^2 = {norm!r}")
        self.amp0 = a0
        self.amp1 = a1

    def inner(self, other: "PureState") -> complex:
        """<self|other>."""
        return self.amp0.conjugate() * other.amp0 + self.amp1.conjugate() * other.amp1

    def ket(self) -> np.ndarray:
        return np.array([self.amp0, self.amp1], dtype=complex)

    def projector(self) -> np.ndarray:
        k = self.ket()
        return np.outer(k, k.conj())

    def approx_eq(self, other: "PureState", atol: float = ATOL_ALG) -> bool:
        """Equality up to global phase."""
        return abs(abs(self.inner(other)) - 1.0) <= atol

    def __repr__(self) -> str:
        return f"PureState({self.amp0!r}, {self.amp1!r})"


KET0 = PureState(1, 0)
KET1 = PureState(0, 1)
KET_PLUS = PureState(_SQRT_HALF, _SQRT_HALF)
KET_MINUS = PureState(_SQRT_HALF, -_SQRT_HALF)


class Basis(Enum):
    """Prepare/measure axis: Z eigenstates |0>,|1>; X eigenstates |+>,|->."""

    Z = 0
    X = 1

    def eigenstates(self) -> tuple[PureState, PureState]:
        return _EIGENSTATES[self]

    def conjugate(self) -> "Basis":
        return Basis.X if self is Basis.Z else Basis.Z


_EIGENSTATES = {Basis.Z: (KET0, KET1), Basis.X: (KET_PLUS, KET_MINUS)}

# All four BB84 states, indexed [basis][bit].
BB84_STATES = {
    Basis.Z: (KET0, KET1),
    Basis.X: (KET_PLUS, KET_MINUS),
}


def make_bb84_state(basis: Basis, bit: int) -> PureState:
    """The BB84 state encoding ``bit`` in ``basis`` (Z: |0>,|1>; X: |+>,|->)."""
    if bit not in (0, 1):
        raise QMathError(f"bit must be 0 or 1, got {bit!r}")
    return BB84_STATES[basis][bit]


def identify_bb84(state: PureState, atol: float = ATOL_DERIVED) -> tuple[Basis, int]:
    """Which of the four BB84 states this is (up to global phase)."""
    for basis in (Basis.Z, Basis.X):
        for bit in (0, 1):
            if state.approx_eq(BB84_STATES[basis][bit], atol):
                return basis, bit
    raise QMathError(f"not a BB84 state: {state!r}")


def _prob_zero(state: PureState, basis: Basis) -> float:
    if basis is Basis.Z:
        a = state.amp0
        return a.real * a.real + a.imag * a.imag
    s = (state.amp0 + state.amp1)
    return 0.5 * (s.real * s.real + s.imag * s.imag)


def measure(state: PureState, basis: Basis, rng: np.random.Generator) -> tuple[int, PureState]:
    """Projective measurement in ``basis``: samples the outcome bit with the Born
    rule and returns (bit, collapsed eigenstate)."""
    bit = 0 if rng.random() < _prob_zero(state, basis) else 1
    return bit, _EIGENSTATES[basis][bit]


class DensityMatrix:
    """2x2 Hermitian, unit-trace, PSD matrix."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (2, 2):
            raise QMathError(f"expected 2x2 matrix, got shape {m.shape}")
        if not np.allclose(m, m.conj().T, atol=ATOL_ALG, rtol=0):
            raise QMathError("matrix is not Hermitian")
        if abs(m[0, 0].real + m[1, 1].real - 1.0) > ATOL_ALG:
            raise QMathError(f"trace must be 1, got {np.trace(m)!r}")
        if np.linalg.eigvalsh(m).min() < -ATOL_ALG:
            raise QMathError("matrix is not positive semi-definite")
        self.matrix = m

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityMatrix":
        return cls(state.projector())

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(2) / 2)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def __repr__(self) -> str:
        return f"DensityMatrix({self.matrix.tolist()!r})"


def _check_psd(element: np.ndarray, what: str = "POVM element") -> np.ndarray:
    e = np.asarray(element, dtype=complex)
    if e.shape != (2, 2):
        raise QMathError(f"{what} must be 2x2, got shape {e.shape}")
    if not np.allclose(e, e.conj().T, atol=ATOL_ALG, rtol=0):
        raise QMathError(f"{what} is not Hermitian")
    if np.linalg.eigvalsh(e).min() < -ATOL_ALG:
        raise QMathError(f"{what} is not positive semi-definite")
    return e


class Povm:
    """Ordered collection of PSD elements summing to the identity."""

    __slots__ = ("elements",)

    def __init__(self, elements: Sequence[np.ndarray]):
        checked = [_check_psd(e) for e in elements]
        if not checked:
            raise QMathError("POVM needs at least one element")
        total = sum(checked)
        if not np.allclose(total, np.eye(2), atol=ATOL_ALG, rtol=0):
            raise QMathError("POVM elements do not sum to the identity")
        self.elements = checked

    def outcome_distribution(self, rho: DensityMatrix) -> list[float]:
        return [born_probability(rho, e) for e in self.elements]


EnsembleMember = Union[PureState, DensityMatrix]


@dataclass(frozen=True)
class Ensemble:
    """Probability-weighted mixture of pure or mixed states."""

    members: tuple[tuple[float, EnsembleMember], ...] = field(default=())

    def __post_init__(self):
        probs = [p for p, _ in self.members]
        if any(p < 0 for p in probs):
            raise QMathError("ensemble probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > ATOL_ALG:
            raise QMathError(f"ensemble probabilities must sum to 1, got {sum(probs)!r}")


def density_from_ensemble(ensemble: Ensemble) -> DensityMatrix:
    """rho = sum_j P_j |psi_j><psi_j| (or sum_j P_j rho_j for mixed members)."""
    acc = np.zeros((2, 2), dtype=complex)
    for p, member in ensemble.members:
        if isinstance(member, PureState):
            acc += p * member.projector()
        else:
            acc += p * member.matrix
    return DensityMatrix(acc)


def born_probability(rho: DensityMatrix, element: np.ndarray) -> float:
    """Tr(rho E), clamped to [0, 1]; E must be PSD."""
    e = _check_psd(element, "measurement element")
    p = float(np.trace(rho.matrix @ e).real)
    if p < -ATOL_ALG or p > 1.0 + ATOL_ALG:
        raise QMathError(f"Born probability out of range: {p!r}")
    return min(max(p, 0.0), 1.0)


def _as_distribution(dist, name: str = "distribution") -> np.ndarray:
    p = np.asarray(dist, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise QMathError(f"{name} must be a nonempty 1-D array")
    if p.min() < 0:
        raise QMathError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise QMathError(f"{name} must sum to 1, got {p.sum()!r}")
    return p


def shannon_entropy(dist) -> float:
    """H(p) in bits, with 0*log(0) = 0."""
    p = _as_distribution(dist)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def mutual_information(p0, p1, pi0: float, pi1: float) -> float:
    """I = H(pi0*p0 + pi1*p1) - pi0*H(p0) - pi1*H(p1), in bits."""
    a = _as_distribution(p0, "p0")
    b = _as_distribution(p1, "p1")
    if a.shape != b.shape:
        raise QMathError("p0 and p1 must have the same support size")
    if pi0 < 0 or pi1 < 0 or abs(pi0 + pi1 - 1.0) > 1e-9:
        raise QMathError(f"priors must be nonnegative and sum to 1, got ({pi0!r}, {pi1!r})")
    mix = pi0 * a + pi1 * b
    info = shannon_entropy(mix) - pi0 * shannon_entropy(a) - pi1 * shannon_entropy(b)
    return max(info, 0.0)


def statistical_overlap(p0, p1) -> float:
    """Bhattacharyya overlap of two classical distributions: sum_b sqrt(p0 p1)."""
    a = _as_distribution(p0, "p0")
    b = _as_distribution(p1, "p1")
    if a.shape != b.shape:
        raise QMathError("p0 and p1 must have the same support size")
    return float(np.sqrt(a * b).sum())


def bayes_error(p0, p1, pi0: float, pi1: float) -> float:
    """Minimum expected guessing-error probability: sum_b min(pi0 p0, pi1 p1)."""
    a = _as_distribution(p0, "p0")
    b = _as_distribution(p1, "p1")
    if a.shape != b.shape:
        raise QMathError("p0 and p1 must have the same support size")
    if pi0 < 0 or pi1 < 0 or abs(pi0 + pi1 - 1.0) > 1e-9:
        raise QMathError(f"priors must be nonnegative and sum to 1, got ({pi0!r}, {pi1!r})")
    return float(np.minimum(pi0 * a, pi1 * b).sum())


def kolmogorov_distance_classical(p0, p1) -> float:
    """Total-variation distance between two classical distributions."""
    a = _as_distribution(p0, "p0")
    b = _as_distribution(p1, "p1")
    return float(0.5 * np.abs(a - b).sum())


def kolmogorov_distance(rho0: DensityMatrix, rho1: DensityMatrix) -> float:
    """Half the trace norm of (rho0 - rho1): the maximum over all measurements of
    the classical total-variation distance of their outcome distributions."""
    lam = np.linalg.eigvalsh(rho0.matrix - rho1.matrix)
    return float(0.5 * np.abs(lam).sum())


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def bhattacharyya(rho0: DensityMatrix, rho1: DensityMatrix) -> float:
    """Tr sqrt(sqrt(rho0) rho1 sqrt(rho0)); 1 for identical states, 0 for orthogonal.

    For a pair of qubit states the trace of the matrix square root has the
    closed form sqrt(Tr(rho0 rho1) + 2 sqrt(det rho0 det rho1)), which avoids
    the precision loss of an explicit eigendecomposition near rank one.
    """
    cross = float(np.trace(rho0.matrix @ rho1.matrix).real)
    dets = float(np.linalg.det(rho0.matrix).real) * float(np.linalg.det(rho1.matrix).real)
    value = math.sqrt(max(cross + 2.0 * math.sqrt(max(dets, 0.0)), 0.0))
    return min(value, 1.0)


def fidelity_pure(rho0: DensityMatrix, psi1: PureState) -> float:
    """<psi1| rho0 |psi1>; equals 1 iff rho0 is the projector onto psi1."""
    k = psi1.ket()
    val = float((k.conj() @ rho0.matrix @ k).real)
    return min(max(val, 0.0), 1.0)


def cloning_efficiency_bound(psi0: PureState, psi1: PureState) -> float:
    """Maximum probabilistic-cloning efficiency 1 / (1 + |<psi0|psi1>|)."""
    return 1.0 / (1.0 + abs(psi0.inner(psi1)))


def average_cloning_efficiency() -> float:
    """Weighted average cloning efficiency over the BB84 state pairs: two
    orthogonal pairs (weight 1/8 each), four non-orthogonal pairs (1/8 each)
    and four identical pairs (1/16 each)."""
    eta_orth = cloning_efficiency_bound(KET0, KET1)
    eta_nonorth = cloning_efficiency_bound(KET0, KET_PLUS)
    eta_same = cloning_efficiency_bound(KET_PLUS, KET_PLUS)
    return 2 * (1 / 8) * eta_orth + 4 * (1 / 8) * eta_nonorth + 4 * (1 / 16) * eta_same


def partial_trace_b(joint: np.ndarray) -> DensityMatrix:
    """Reduced state of subsystem A from a 4x4 density matrix on A (x) B."""
    m = np.asarray(joint, dtype=complex)
    if m.shape != (4, 4):
        raise QMathError(f"expected 4x4 matrix, got shape {m.shape}")
    if not np.allclose(m, m.conj().T, atol=ATOL_ALG, rtol=0):
        raise QMathError("joint matrix is not Hermitian")
    if abs(np.trace(m).real - 1.0) > ATOL_ALG:
        raise QMathError(f"joint trace must be 1, got {np.trace(m)!r}")
    if np.linalg.eigvalsh(m).min() < -ATOL_ALG:
        raise QMathError("joint matrix is not positive semi-definite")
    reduced = np.zeros((2, 2), dtype=complex)
    for a in range(2):
        for a2 in range(2):
            reduced[a, a2] = m[2 * a, 2 * a2] + m[2 * a + 1, 2 * a2 + 1]
    return DensityMatrix(reduced)
