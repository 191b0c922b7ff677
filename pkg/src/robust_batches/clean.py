"""End-to-end cleaning pipeline: partition, discretize, detect-and-delete.

Given a contaminated collection, the pipeline sizes the partition from
(k, n, beta), cuts it on the pooled samples, discretizes every batch, and
runs the detect-and-delete loop.  The retained sub-collection's pooled
empirical distribution is the estimator; in simulation mode the report
scores it against the known target before and after cleaning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    BETA_MAX,
    BatchCollection,
    CorruptionParams,
    DiscretizedCollection,
    DomainError,
    UsageError,
)
from .corruption import STOP_FACTOR, TRIGGER_FACTOR
from .detect import clean_discrete
from .distance import fk_distance
from .partition import IntervalPartition, build_partition, cell_occupancy, choose_ell, discretize

# Partition sizing needs beta > 0; an uncontaminated run still needs bins.
ELL_BETA_FLOOR = 0.1

DEFAULT_DELTA = 0.1


@dataclass(frozen=True)
class CleaningReport:
    """Everything a cleaning run decided and measured."""

    retained_ids: tuple[int, ...]
    ell: int
    k: int
    beta: float
    tau: float
    kappa_g: float
    rounds: int
    max_cell_occupancy: int
    fk_before: float | None = None
    fk_after: float | None = None
    retention_good: float | None = None

    def to_dict(self) -> dict:
        return {
            "retained_ids": list(self.retained_ids),
            "ell": self.ell,
            "k": self.k,
            "beta": self.beta,
            "tau": self.tau,
            "kappa_g": self.kappa_g,
            "rounds": self.rounds,
            "max_cell_occupancy": self.max_cell_occupancy,
            "fk_before": self.fk_before,
            "fk_after": self.fk_after,
            "retention_good": self.retention_good,
        }


@dataclass(frozen=True)
class CleanPipelineResult:
    """Full pipeline state; ``robust_clean_fk`` returns the public slice."""

    retained: BatchCollection
    report: CleaningReport
    partition: IntervalPartition
    discretized: DiscretizedCollection
    cleaned: DiscretizedCollection
    params: CorruptionParams | None


def guidance_batches(k: int, n: int, beta: float, delta: float = DEFAULT_DELTA) -> float:
    """Batch-count guidance (k*log(n/beta) + log(1/delta)) * sqrt(n) / beta^3."""
    return (k * np.log(n / beta) + np.log(1.0 / delta)) * np.sqrt(n) / beta**3


def _reference_masses(reference, partition: IntervalPartition) -> np.ndarray:
    if hasattr(reference, "bin_masses"):
        return np.asarray(reference.bin_masses(partition), dtype=float)
    ref = np.asarray(reference, dtype=float)
    if ref.shape != (partition.ell,):
        raise UsageError("reference vector must match the partition size")
    return ref


def clean_pipeline(
    collection: BatchCollection,
    k: int,
    beta: float,
    rng: np.random.Generator,
    detector: str = "spectral",
    trigger_factor: float = TRIGGER_FACTOR,
    stop_factor: float = STOP_FACTOR,
    candidates_budget: int | None = None,
    reference=None,
    delta: float = DEFAULT_DELTA,
) -> CleanPipelineResult:
    """Run the full cleaning pipeline and keep the intermediate artifacts.

    ``beta = 0`` declares the collection uncontaminated: the partition is
    still built (sized with a floor of ELL_BETA_FLOOR in place of beta) but
    no deletion runs.  ``reference`` (simulation mode) is a target with a
    ``bin_masses(partition)`` method, or a per-bin probability vector.
    """
    if beta > BETA_MAX:
        raise DomainError(
            f"beta={beta} refused: the cleaning guarantees assume beta <= {BETA_MAX}"
        )
    if beta < 0.0:
        raise DomainError("beta must be nonnegative")
    if collection.m < 2:
        raise UsageError("cleaning needs at least two batches")
    n, m = collection.n, collection.m
    sizing_beta = beta if beta > 0.0 else ELL_BETA_FLOOR
    ell = choose_ell(k, n, sizing_beta, m)
    if beta > 0.0:
        guide = guidance_batches(k, n, beta, delta)
        if m < guide:
            warnings.warn(
                f"m={m} batches is below the sample-size guidance {guide:.0f} "
                f"for k={k}, n={n}, beta={beta}; the error bound may not hold",
                stacklevel=2,
            )
    pooled = collection.pooled_samples()
    partition = build_partition(pooled, ell)
    occupancy = int(cell_occupancy(partition, pooled).max())
    disc = discretize(collection, partition)
    ref_vec = _reference_masses(reference, partition) if reference is not None else None
    fk_before = (
        float(fk_distance(disc.pooled(), ref_vec, k)) if ref_vec is not None else None
    )
    if beta > 0.0:
        params = CorruptionParams(beta, n, m)
        cleaned, rounds = clean_discrete(
            disc, params, rng, detector, trigger_factor, stop_factor, candidates_budget
        )
    else:
        params, cleaned, rounds = None, disc, 0
    fk_after = (
        float(fk_distance(cleaned.pooled(), ref_vec, k)) if ref_vec is not None else None
    )
    retention = None
    if collection.truth is not None:
        good = collection.good_ids()
        if good:
            retention = len(good & set(cleaned.ids)) / len(good)
    report = CleaningReport(
        retained_ids=cleaned.ids,
        ell=partition.ell,
        k=k,
        beta=beta,
        tau=params.tau if params is not None else 0.0,
        kappa_g=params.kappa_g if params is not None else 0.0,
        rounds=rounds,
        max_cell_occupancy=occupancy,
        fk_before=fk_before,
        fk_after=fk_after,
        retention_good=retention,
    )
    return CleanPipelineResult(
        retained=collection.subset(cleaned.ids),
        report=report,
        partition=partition,
        discretized=disc,
        cleaned=cleaned,
        params=params,
    )


def robust_clean_fk(
    collection: BatchCollection,
    k: int,
    beta: float,
    rng: np.random.Generator,
    detector: str = "spectral",
    **kwargs,
) -> tuple[BatchCollection, CleaningReport]:
    """Clean a collection so its pooled empirical distribution is close to
    the target in the k-interval-union distance.  See :func:`clean_pipeline`
    for the keyword knobs; returns the retained batches and the report."""
    result = clean_pipeline(collection, k, beta, rng, detector, **kwargs)
    return result.retained, result.report
