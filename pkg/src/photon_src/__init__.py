"""Four-level cavity-QED single-photon source: master equation, effective model and closed forms."""

from .closedform import (
    EmissionNotReachedError,
    ExtendedDecay,
    PerformanceSummary,
    RatioMap,
    emission_time,
    extended_decay,
    lambda_si,
    lambda_si_bound,
    lambda_total,
    optimal_delta_e2,
    overlap,
    p_re_of_t,
    p_si_of_t,
    p_si_total_rre,
    purity_fidelity,
    rate_r,
    ratio_map,
    ratio_threshold,
    summarize,
)
from .effective import (
    EffectiveModel,
    ExcitedState,
    SingularityError,
    build_effective,
    build_nonhermitian,
    effective_evolve,
    excited_state,
)
from .lindblad import (
    FixedTime,
    IntegrationError,
    IntegratorConfig,
    PopulationThreshold,
    SimResult,
    evolve,
    photon_flux,
)
from .photonics import (
    PhotonRecord,
    TemporalModeState,
    build_record,
    purity_fidelity_numeric,
    single_excitation_curve,
    temporal_state,
    wavepacket,
)
from .qmodel import (
    LevelScheme,
    LinearPulse,
    ParameterError,
    PulseShape,
    SystemParams,
    TabulatedPulse,
    build_hamiltonian,
    build_lindblads,
    eval_pulse,
    h_integral,
    optimal_kappa_ex,
)

__version__ = "0.1.0"
