"""Product-coefficient representation of measures on binary set systems."""

from .core import (
    CoefficientTree,
    LeafMeasure,
    NaryCoefficients,
    NodeId,
    SparseLeafMeasure,
    Violation,
    coefficient_from_masses,
    coefficients_from_leaves,
    dirac_coefficients,
    nary_coefficients,
    node_mass,
    reconstruct_leaves,
    reconstruct_sparse,
    validate,
)
from .errors import (
    ConfigError,
    DepthError,
    DomainError,
    DyadicError,
    IngestError,
    InvalidCoefficientError,
    InvalidMeasureError,
    ShapeError,
)
from .ingest import (
    FeatureSystem,
    HypercubeSystem,
    ThresholdPredicate,
    boundary_assignment,
    feature_system_measure,
    points_to_measure,
    series_to_measure,
)
from .noise import (
    NoiseField,
    NoiseParams,
    apply_noise,
    check_kahane,
    check_perturbation,
    noisy_coefficient_stats,
    sample_noise_field,
)
from .stats import (
    ScaleWeightedNorm,
    average_coefficients,
    norm_distance,
    single_scale_variance,
    variance_degree2,
    weighted_feature_vector,
)
from .viz import DayWheel, WeldCurve, day_wheel, knot_labels, pseudo_welding_curve, render_svg

__version__ = "0.1.0"
