"""Reliability scoring of ML predictions against their training data.

A prediction is trusted in proportion to how close its inputs (and,
optionally, the predicted value) lie to the nearest training sample, using
a Laplacian decay of a diagonal Mahalanobis distance.
"""

__version__ = "0.1.0"

from .core import (
    SCALE_FACTOR,
    CovarianceStructure,
    DiameterVector,
    DimensionError,
    FeatureScaler,
    KnowledgeBase,
    LaddrError,
    Mode,
    ReliabilityConfig,
    Schema,
    SchemaError,
    build_knowledge_base,
    load_knowledge_base,
    save_knowledge_base,
    solve_covariance,
)
from .index import NeighborIndex, StaleIndexError, brute_force_nearest, build_index, nearest
from .metric import mahalanobis, to_scaled_space
from .metrics import (
    AcceptanceCriterion,
    Cell,
    ConfusionCounts,
    classify,
    degradation,
    ineptitude,
    peril,
    tally,
)
from .optimizer import EvaluationSet, SearchSpec, evaluate_candidate, optimize
from .reliability import ReliabilityMap, ReliabilityScore, generate_map, reliability, reliability_mode_select
from .supervisor import Decision, Supervisor, supervise_stream
