"""recomblab: recombination dynamics on the Boolean cube.

Exact and Monte Carlo evolution of probability measures under the pairwise
recombination product, in discrete and continuous time, together with the
mixing profiles, martingale diagnostics, and distance bounds that describe
how fast the dynamics reach the stationary product measure.
"""

from .cube import (
    FourierTable,
    Pmf,
    SpinConfig,
    all_biases,
    fourier_from_csv,
    fourier_to_csv,
    is_balanced,
    load_json,
    marginal_bias,
    monochromatic_pmf,
    point_mass,
    pmf_from_csv,
    pmf_to_csv,
    product_fourier,
    product_pmf,
    random_balanced_pmf,
    random_pmf,
    save_json,
    stationary_product,
    stationary_product_fourier,
    tv_distance,
    uniform_pmf,
    wht_forward,
    wht_inverse,
)
from .discrete import (
    DiscreteUpperBounds,
    FragmentationState,
    QuenchedEnvironment,
    TiltStatistics,
    collide,
    collide_coeffs,
    collide_direct,
    collide_pmf,
    discrete_trajectory,
    discrete_upper_bounds,
    evolve_discrete,
    fragmentation_step,
    fragmentation_time,
    initial_fragmentation,
    mono_mixture_tv,
    pair_separation_bound,
    quenched_measure,
    sample_quenched,
    tilt_statistics,
)
from .errors import (
    BudgetError,
    CapacityError,
    ConfigError,
    DimensionMismatchError,
    InvalidDistributionError,
    NumericalInvariantError,
    RecombError,
)
from .profiles import (
    AsymptoticsReport,
    BlockProductState,
    BlockSpec,
    ContinuousBlockReport,
    DensityBoundCheck,
    DiscreteBlockReport,
    ProfilePoint,
    block_product_pmf,
    check_l1_l2_bound,
    continuous_profile,
    discrete_profile,
    gaussian_tv,
    gaussian_tv_asymptotics,
    gaussian_tv_complement,
    gaussian_tv_quadrature,
    l1_from_l2_bound,
    lowerbound_experiment_continuous,
    lowerbound_experiment_discrete,
    mixture_profile_tv,
    mono_tv_large_n_limit,
    normal_density_ratio,
    two_valued_extremal_density,
)
from .streams import STREAM_ALGORITHM, rng_substream
from .yule import (
    MartingaleBatch,
    MartingaleSample,
    MonteCarloMeasure,
    SpinalCheckReport,
    TailEstimate,
    YuleTree,
    continuous_trajectory,
    double_quenched_estimate,
    evolve_continuous,
    leaf_weight_martingale,
    martingale_limit_samples,
    martingale_samples,
    martingale_tail_probability,
    quenched_measure_on_tree,
    sample_leaf_spins,
    sample_partition_on_tree,
    sample_yule,
    spinal_identity_check,
    tail_probability_from_samples,
    tree_measure,
    wild_mc_estimate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
