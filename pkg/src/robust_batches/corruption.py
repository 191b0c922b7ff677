"""Corruption scores and the randomized batch-deletion filter.

A batch's corruption score for a subset S is zero while its empirical
probability sits within tau of the cross-batch median, and the squared
deviation beyond that.  Collections of good batches keep their total
score under the budget kappa_g for every subset simultaneously, so any
subset whose score is a large multiple of kappa_g must owe most of it to
adversarial batches; deleting batches with probability proportional to
their scores therefore removes adversarial batches with high precision.

The sweep triggers deletion at TRIGGER_FACTOR*kappa_g and deletes down to
STOP_FACTOR*kappa_g.  Both factors are exposed because they are asymptotic
constants: at desk scale (small n) per-batch scores are capped at 1, which
can sit below trigger*ln(6e/beta)/n, and the factors must then be scaled
down for the filter to engage at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    GOOD,
    CorruptionParams,
    DiscretizedCollection,
    UsageError,
    binomial_variance,
    empirical_prob,
    per_batch_probs,
)

TRIGGER_FACTOR = 25.0
STOP_FACTOR = 20.0


def _score_vector(mu: np.ndarray, med: float, tau: float) -> np.ndarray:
    dev = mu - med
    return np.where(np.abs(dev) <= tau, 0.0, dev * dev)


def median_prob(sub, subset) -> float:
    """Median of the per-batch empirical probabilities of ``subset``.

    For an even batch count this is the average of the two middle order
    statistics.
    """
    mu = per_batch_probs(sub, subset)
    return float(np.median(mu))


def corruption_batch(batch, subset, med: float, params: CorruptionParams) -> float:
    """Corruption score of one batch: 0 inside the tau-ball, else squared deviation."""
    if not 0.0 <= med <= 1.0:
        raise UsageError(f"median must lie in [0, 1], got {med}")
    dev = empirical_prob(batch, subset) - med
    if abs(dev) <= params.tau:
        return 0.0
    return dev * dev


@dataclass(frozen=True)
class CorruptionReport:
    """Per-batch and total corruption scores of a sub-collection for one subset."""

    subset: frozenset[int]
    median: float
    per_batch_scores: dict[int, float]
    total: float

    def to_dict(self) -> dict:
        return {
            "subset": sorted(self.subset),
            "median": self.median,
            "per_batch_scores": {str(k): v for k, v in sorted(self.per_batch_scores.items())},
            "total": self.total,
        }


def corruption_collection(sub, subset, params: CorruptionParams) -> CorruptionReport:
    """Score every batch of ``sub`` against the sub-collection's own median."""
    mu = per_batch_probs(sub, subset)
    med = float(np.median(mu))
    scores = _score_vector(mu, med, params.tau)
    ids = sub.ids if isinstance(sub, DiscretizedCollection) else tuple(b.id for b in sub.batches)
    per_batch = {int(i): float(s) for i, s in zip(ids, scores)}
    return CorruptionReport(
        subset=frozenset(getattr(subset, "members", frozenset())),
        median=med,
        per_batch_scores=per_batch,
        total=float(scores.sum()),
    )


def batch_deletion(
    sub: DiscretizedCollection,
    subset,
    med: float,
    params: CorruptionParams,
    rng: np.random.Generator,
    stop_factor: float = STOP_FACTOR,
) -> DiscretizedCollection:
    """Randomized filter: remove batches, sampled proportionally to their
    corruption scores, until the total drops below stop_factor*kappa_g.

    ``med`` is frozen for the whole loop (it is an input, not recomputed),
    so per-batch scores are fixed and the loop strictly shrinks the total.
    """
    if not 0.0 <= med <= 1.0:
        raise UsageError(f"median must lie in [0, 1], got {med}")
    mu = per_batch_probs(sub, subset)
    scores = _score_vector(mu, med, params.tau)
    alive = np.ones(sub.m, dtype=bool)
    threshold = stop_factor * params.kappa_g
    total = float(scores[alive].sum())
    while total >= threshold and total > 0.0:
        cum = np.cumsum(scores[alive])
        pick = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        pick = min(pick, cum.size - 1)
        victim = np.nonzero(alive)[0][pick]
        alive[victim] = False
        if not alive.any():
            raise UsageError(
                "batch deletion removed every batch; thresholds are inconsistent with the data"
            )
        total = float(scores[alive].sum())
    return sub.subset(alive)


def clean_over_cover(
    collection: DiscretizedCollection,
    cover,
    params: CorruptionParams,
    rng: np.random.Generator,
    trigger_factor: float = TRIGGER_FACTOR,
    stop_factor: float = STOP_FACTOR,
) -> DiscretizedCollection:
    """Sweep a finite cover in order, running batch deletion on every subset
    whose corruption score has reached trigger_factor*kappa_g."""
    sub = collection
    for subset in cover:
        mu = per_batch_probs(sub, subset)
        med = float(np.median(mu))
        total = float(_score_vector(mu, med, params.tau).sum())
        if total >= trigger_factor * params.kappa_g:
            sub = batch_deletion(sub, subset, med, params, rng, stop_factor)
    return sub


@dataclass(frozen=True)
class PropertyCheck:
    """Pass/fail margins of the three concentration properties for one subset."""

    subset: tuple[int, ...]
    median_error: float
    median_bound: float
    mean_error: float
    mean_bound: float
    msd_error: float
    msd_bound: float
    corruption_total: float

    @property
    def property1_ok(self) -> bool:
        return self.median_error <= self.median_bound

    @property
    def property2_ok(self) -> bool:
        return self.mean_error <= self.mean_bound and self.msd_error <= self.msd_bound


@dataclass(frozen=True)
class PropertyCheckReport:
    """Aggregate of :class:`PropertyCheck` rows plus the corruption budget test."""

    checks: tuple[PropertyCheck, ...]
    kappa_g: float
    max_corruption: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "max_corruption", max((c.corruption_total for c in self.checks), default=0.0)
        )

    @property
    def property1_ok(self) -> bool:
        return all(c.property1_ok for c in self.checks)

    @property
    def property2_ok(self) -> bool:
        return all(c.property2_ok for c in self.checks)

    @property
    def property3_ok(self) -> bool:
        return self.max_corruption <= self.kappa_g

    @property
    def all_ok(self) -> bool:
        return self.property1_ok and self.property2_ok and self.property3_ok

    def to_dict(self) -> dict:
        return {
            "kappa_g": self.kappa_g,
            "max_corruption": self.max_corruption,
            "property1_ok": self.property1_ok,
            "property2_ok": self.property2_ok,
            "property3_ok": self.property3_ok,
            "subsets_checked": len(self.checks),
        }


def check_properties(
    good_sub: DiscretizedCollection,
    target: np.ndarray,
    subsets,
    params: CorruptionParams,
) -> PropertyCheckReport:
    """Check the three concentration properties of a good-only collection.

    Per subset S with true probability p(S): the median of the per-batch
    estimates must sit within sqrt(ln(6)/n) of p(S); the mean within
    (beta/2)*sqrt(ln(6e/beta)/n); the mean squared deviation within
    6*beta*ln(6e/beta)/n of the binomial variance; and the largest total
    corruption over the subsets must stay below kappa_g.

    Requires truth flags and refuses collections containing adversarial
    batches: the properties are claims about good batches only.
    """
    if good_sub.truth is None:
        raise UsageError("property checks need truth flags (simulation mode)")
    if any(t != GOOD for t in good_sub.truth):
        raise UsageError("property checks apply to good-only collections")
    target = np.asarray(target, dtype=float)
    if target.size != good_sub.ell:
        raise UsageError("target distribution must match the partition size")
    n = params.n
    med_bound = math.sqrt(math.log(6.0) / n)
    mean_bound = (params.beta / 2.0) * math.sqrt(params.log_term / n)
    msd_bound = 6.0 * params.beta * params.log_term / n
    checks = []
    for subset in subsets:
        p_s = float(target[subset.indices0()].sum())
        mu = per_batch_probs(good_sub, subset)
        med = float(np.median(mu))
        scores = _score_vector(mu, med, params.tau)
        msd = float(np.mean((mu - p_s) ** 2))
        checks.append(
            PropertyCheck(
                subset=tuple(sorted(subset.members)),
                median_error=abs(med - p_s),
                median_bound=med_bound,
                mean_error=abs(float(mu.mean()) - p_s),
                mean_bound=mean_bound,
                msd_error=abs(msd - binomial_variance(p_s, n)),
                msd_bound=msd_bound,
                corruption_total=float(scores.sum()),
            )
        )
    return PropertyCheckReport(tuple(checks), params.kappa_g)
