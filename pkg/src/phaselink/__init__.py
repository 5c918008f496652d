"""Echo state networks with oscillating link strengths.

Link phases synchronize through activity-gated mean-field coupling; the
degree of synchrony senses regime changes in nonstationary input without
supervision, and steering the mean phase turns a trained network into a
digital twin that can recall and extrapolate individual dynamical states.
"""

__version__ = "0.1.0"

from .analysis import (
    AttractorClass,
    ChangeReport,
    classify_attractor,
    detect_equilibrium_shift,
    largest_lyapunov_proxy,
    measure_cycle_frames,
    pearson_correlation,
)
from .dynsys import (
    ParamSchedule,
    SystemKind,
    SystemSpec,
    Trajectory,
    estimate_thomas_b,
    lorenz_deriv,
    mackey_glass_step,
    rk4_step,
    simulate,
    thomas_deriv,
)
from .errors import PhaselinkError
from .learner import (
    ReadoutMatrix,
    TargetingConfig,
    TrainConfig,
    TwinSession,
    closed_loop_predict,
    harvest_states,
    ridge_fit,
    target_mean_phase,
)
from .phasenet import (
    OrderSample,
    PhaseParams,
    PhaseState,
    PhaseTopology,
    build_phase_topology,
    forced_phase_step,
    global_order,
    isolated_phase_analytic,
    local_mean_field,
    phase_step,
    wrap_phase,
)
from .reservoir import (
    ReservoirParams,
    ReservoirState,
    ReservoirTopology,
    build_reservoir,
    modulated_adjacency,
    readout,
    reservoir_step,
    spectral_radius,
)

__all__ = [
    "AttractorClass", "ChangeReport", "classify_attractor", "detect_equilibrium_shift",
    "largest_lyapunov_proxy", "measure_cycle_frames", "pearson_correlation",
    "ParamSchedule", "SystemKind", "SystemSpec", "Trajectory", "estimate_thomas_b",
    "lorenz_deriv", "mackey_glass_step", "rk4_step", "simulate", "thomas_deriv",
    "PhaselinkError",
    "ReadoutMatrix", "TargetingConfig", "TrainConfig", "TwinSession",
    "closed_loop_predict", "harvest_states", "ridge_fit", "target_mean_phase",
    "OrderSample", "PhaseParams", "PhaseState", "PhaseTopology", "build_phase_topology",
    "forced_phase_step", "global_order", "isolated_phase_analytic", "local_mean_field",
    "phase_step", "wrap_phase",
    "ReservoirParams", "ReservoirState", "ReservoirTopology", "build_reservoir",
    "modulated_adjacency", "readout", "reservoir_step", "spectral_radius",
]
