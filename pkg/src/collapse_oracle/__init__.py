"""Bounds and optima for experiments that try to detect wave-function collapse."""

__version__ = "0.1.0"

from .discrimination import (
    Bounds,
    DiscriminationResult,
    Effect,
    blind_guess_thresholds,
    delta_bound,
    f_psi,
    f_psi_inverse,
    helstrom,
    optimal_known_psi,
    reduce_dimension,
    reliability_density,
    reliability_known_psi,
    rmax_2d_closed_form,
    rmax_bounds_known_psi,
    rmax_density_upper_bound,
    rmax_known_psi,
    stern_gerlach_direction,
)
from .linalg import diag_part, hermitian_eig, partial_trace_T
from .model import (
    CollapseBasis,
    CollapseScenario,
    DensityMatrix,
    StateVector,
    apply_collapse_channel,
    density_from_ensemble,
    make_stream,
    sample_collapse,
    sample_uniform_state,
)
from .montecarlo import conjecture_scan, estimate_lambda, simulate_reliability
