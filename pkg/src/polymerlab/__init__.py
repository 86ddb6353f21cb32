"""Passage times and polymer partition functions in layered Bernoulli
environments with unbounded jumps."""

__version__ = "0.1.0"

from .env import (
    NEG_INFINITY,
    EnvSlab,
    ModelParams,
    RegularizedSlab,
    generate_slab,
    hash64,
    layer_points,
    load_slab,
    open_sites,
    regularize,
    resample_layer,
    save_slab,
    scale_factor,
    theta_property_check,
)
from .errors import (
    CapacityError,
    InfeasibleLayerError,
    PolymerlabError,
    ValidationError,
)
from .fpp import (
    PassageResult,
    PathRecord,
    SensitivityResult,
    brute_force_passage,
    continuation_cost,
    face_to_face,
    greedy_upper_bound,
    improve_jump,
    jump_histogram,
    max_jump,
    passage_time,
    path_from_positions,
    resample_sensitivity,
)
from .polymer import (
    FINITE_BETA,
    HARD_OBSTACLE,
    BetaLimitResult,
    KernelSpec,
    PartitionResult,
    beta_limit_check,
    brute_force_partition,
    default_half_width,
    flip_identity_check,
    hard_obstacle_partition,
    kernel_normalizer,
    partition_function,
    path_free_energy,
)
from .stats import (
    FPP,
    POLYMER,
    ConcentrationReport,
    ConstantEstimate,
    ContinuityCurve,
    EnsembleSpec,
    HdTrendReport,
    RawTable,
    SlopeFit,
    SuperadditivityReport,
    concentration_scan,
    continuity_scan,
    estimate_free_energy,
    estimate_time_constant,
    fit_log_slope,
    fpp_half_width,
    hd_rescale,
    hd_trend_check,
    max_jump_scan,
    read_raw_table,
    run_ensemble,
    spec_from_dict,
    superadditivity_check,
    write_raw_table,
)
