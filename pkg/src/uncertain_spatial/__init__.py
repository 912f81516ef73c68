"""Probabilistic spatial queries over discretely-uncertain databases.

Exact possible-worlds semantics for small inputs, polynomial-time
Poisson-binomial kernels for per-object probabilities, Monte-Carlo sampling
with representative-result selection, and Apriori-pruned nearest-neighbor
queries over uncertain trajectories.
"""

from .bernoulli import (
    CountDistribution,
    generating_function,
    poisson_binomial_recurrence,
)
from .model import (
    CapExceededError,
    Instance,
    QueryPoint,
    UncertainDatabase,
    UncertainObject,
    UncertainSpatialError,
    ValidationError,
    dumps_database,
    euclidean_distance,
    load_database,
    loads_database,
)
from .predicates import KnnPredicate, RangePredicate, SpatialPredicate
from .queries import (
    ProbabilisticPredicate,
    RangeQuery,
    expected_distance,
    in_range_probability,
    knn_object_probability,
    object_probabilities,
    range_count_distribution,
    rank_distribution,
    threshold_query,
    topk_predicate,
)
from .representatives import (
    Representative,
    alpha_confidence,
    cluster_representatives,
    jaccard_distance,
    max_cover_representatives,
    pam_kmedoids,
    standard_normal_quantile,
)
from .sampling import (
    PossibleResult,
    SampleSet,
    estimate_count_distribution,
    estimate_object_probabilities,
    estimate_result_probabilities,
    sample_worlds,
)
from .trajectories import (
    ExactTrajectoryBackend,
    NNBitmapSample,
    SampledTrajectoryBackend,
    TimestampSet,
    TrajectoryDataset,
    UncertainTrajectory,
    load_trajectory_dataset,
    loads_trajectory_dataset,
    maximal_timestamp_sets,
    pc_tau_nn,
    pcnn_query,
    pfann_probability,
)
from .worlds import (
    PossibleWorld,
    ResultSet,
    enumerate_worlds,
    evaluate_world,
    object_based,
    object_based_from_result_based,
    query_probability,
    result_based,
    world_count,
)

__version__ = "0.1.0"
