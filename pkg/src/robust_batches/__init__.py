"""Robust learning of one-dimensional distributions and interval
classifiers from collections of sample batches, a fraction of which may be
adversarial."""

__version__ = "0.1.0"

from .classify import (
    KIntervalHypothesis,
    LabeledBatch,
    LabeledCollection,
    erm_k_intervals,
    risk,
    robust_classify,
)
from .clean import CleaningReport, clean_pipeline, robust_clean_fk
from .core import (
    Batch,
    BatchCollection,
    CorruptionParams,
    DiscretizedBatch,
    DiscretizedCollection,
    DomainError,
    UsageError,
    binomial_variance,
    empirical_prob,
    empirical_variance,
    pooled_empirical,
)
from .corruption import (
    CorruptionReport,
    batch_deletion,
    check_properties,
    clean_over_cover,
    corruption_batch,
    corruption_collection,
    median_prob,
)
from .detect import (
    clean_discrete,
    max_corruption_subset_brute,
    max_corruption_subset_heuristic,
)
from .distance import best_k_interval_union, fk_distance, fk_distance_brute, tv_distance
from .estimate import PiecewisePolynomial, evaluate_density, fit_piecewise, yatracos_select
from .partition import (
    BinSubset,
    Interval,
    IntervalPartition,
    IntervalUnion,
    build_partition,
    choose_ell,
    discretize,
    lift_subset,
)
from .simulate import attack_fk_targeted, build_collection, metrics, parse_attack, parse_target
