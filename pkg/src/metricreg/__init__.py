"""Distance-based regression for objects in metric spaces.

Predictors and responses are reduced to distance matrices, embedded by
classical MDS, linked by SIMPLS, and mapped back to objects by
space-specific backscoring.
"""

from .corrmat import CorrelationSpace, corr_backscore, corr_combination, corr_frechet_median, nearest_correlation
from .curves import CurveSpace, SampledCurve, WarpParams, combine_pair, combine_triple, frechet_distance, match_params
from .exceptions import (
    DimensionMismatch,
    MetricRegError,
    NoConvergence,
    NoFeasibleSolution,
    ValidationError,
)
from .inference import FitAssessment, PermutationResult, f_statistic, permutation_test, r_squared, rss
from .mds import ClassicalMDS, EuclideanSpace, MdsEmbedding, backscore, cmds, combine_distances, gower_score
from .motion import MotionRecord, motion_corrmats, motion_features
from .pipeline import DistanceRegression, load_model
from .pls import DesignBlock, SIMPLSRegression, assemble_design, loo_select, simpls_fit
from .shapes import ShapeSpace, gpa, opa_align, procrustes_distance, procrustes_distance_matrix
from .synth import synth_dataset

__version__ = "0.1.0"
