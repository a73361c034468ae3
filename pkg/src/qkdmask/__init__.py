"""Simulator for BB84 with key-masked basis announcement, its entanglement-based
extension, eavesdropper models and a single-qubit quantum-information toolkit."""

from .adversary import (
    AttackKind,
    AttackStrategy,
    EveRecord,
    eve_mutual_information_estimate,
    intercept_resend,
    probabilistic_clone_resend,
    transcript_net_information_gain,
    unmasked_information_gain,
)
from .channel import (
    IDEAL_CHANNEL,
    PauliChannelParams,
    RngSeeds,
    Transcript,
    transmit,
)
from .protocol import (
    AbortReason,
    CorrelationRecord,
    ReconciliationMode,
    SessionConfig,
    SessionOutcome,
    Variant,
    chsh_s,
    correlation_coefficient,
    generate_singlet_outcomes,
    recover_bases,
    randomize_bases,
    run_e91_session,
    run_session,
    sift,
)
from .qmath import (
    Basis,
    DensityMatrix,
    Ensemble,
    Povm,
    PureState,
    average_cloning_efficiency,
    bayes_error,
    bhattacharyya,
    born_probability,
    cloning_efficiency_bound,
    density_from_ensemble,
    fidelity_pure,
    kolmogorov_distance,
    make_bb84_state,
    measure,
    mutual_information,
    partial_trace_b,
    shannon_entropy,
    statistical_overlap,
)

__all__ = [name for name in dir() if not name.startswith("_")]
