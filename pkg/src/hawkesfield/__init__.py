"""Spatially structured spiking networks, their mean-field limit, and the
transport-based diagnostics that compare the two."""

__version__ = "0.1.0"

from .model import (
    ConfigError,
    FiringRate,
    InitialCondition,
    ModelParams,
    SpatialMeasure,
    SynapticWeight,
    contraction_constant,
    eval_firing_rate,
)
from .simulate import (
    ExplosionError,
    NetworkState,
    SpikeTrain,
    apply_jump,
    decay_state,
    dominating_rate,
    moment_bound_first,
    moment_bound_second,
    simulate_network,
)
from .streams import RngContract
from .limitfield import (
    IntensityField,
    PotentialField,
    SpatialQuadrature,
    integrate_neural_field,
    lambda_space_lipschitz_bound,
    membrane_potential,
    picard_map,
    simulate_limit_process,
    solve_limit_intensity,
)
from .quantize import (
    QuantizedMeasure,
    TruncatedMeasure,
    find_heavy_cube,
    quantization_bound,
    quantize_measure,
    scenario_s1_positions,
    scenario_s2_positions,
    truncate_measure,
)
from .transport import (
    CouplingReport,
    DiscreteMeasure,
    chaos_covariance,
    compare_potentials,
    dkr_dictionary_lower_estimate,
    dkr_upper_bound,
    estimate_coupling,
    simulate_coupled_pair,
    wasserstein_discrete,
)
