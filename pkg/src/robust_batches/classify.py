"""Binary classification with k-interval decision regions.

The empirical risk minimizer over hypotheses whose positive region is a
union of at most k intervals is exact: a dynamic program walks the sorted
distinct sample positions with (intervals-used, inside/outside) states.
The robust variant first cleans the batches over a per-label discretized
product domain, then runs the ERM on the surviving samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BETA_MAX,
    GOOD,
    CorruptionParams,
    DiscretizedCollection,
    DomainError,
    UsageError,
)
from .corruption import STOP_FACTOR, TRIGGER_FACTOR
from .detect import clean_discrete
from .partition import Interval, IntervalUnion, build_partition, choose_ell

LABELS = (0, 1)


@dataclass(frozen=True)
class LabeledBatch:
    """One batch of (x, y) samples with y in {0, 1}."""

    id: int
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if x.ndim != 1 or x.size == 0 or y.shape != x.shape:
            raise UsageError(f"batch {self.id}: x and y must be matching 1-d arrays")
        if not np.all(np.isfinite(x)):
            raise UsageError(f"batch {self.id}: x contains NaN or infinity")
        if not np.isin(y, LABELS).all():
            raise UsageError(f"batch {self.id}: labels must be 0 or 1")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)


@dataclass(frozen=True)
class LabeledCollection:
    """m labeled batches of n samples each, with optional truth flags."""

    batches: tuple[LabeledBatch, ...]
    truth: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "batches", tuple(self.batches))
        if len(self.batches) < 1:
            raise UsageError("a collection needs at least one batch")
        n = self.batches[0].n
        if any(b.n != n for b in self.batches):
            raise UsageError("all batches must share the same n")
        ids = [b.id for b in self.batches]
        if len(set(ids)) != len(ids):
            raise UsageError("batch ids must be unique")
        if self.truth is not None:
            object.__setattr__(self, "truth", tuple(self.truth))
            if len(self.truth) != len(self.batches):
                raise UsageError("truth flags must match the number of batches")

    @property
    def m(self) -> int:
        return len(self.batches)

    @property
    def n(self) -> int:
        return self.batches[0].n

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.batches)

    def good_ids(self) -> frozenset[int]:
        if self.truth is None:
            raise UsageError("collection carries no truth flags")
        return frozenset(b.id for b, t in zip(self.batches, self.truth) if t == GOOD)

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.concatenate([b.x for b in self.batches])
        y = np.concatenate([b.y for b in self.batches])
        return x, y

    def subset(self, keep_ids) -> "LabeledCollection":
        keep = frozenset(keep_ids)
        idx = [i for i, b in enumerate(self.batches) if b.id in keep]
        if not idx:
            raise UsageError("subset would be empty")
        truth = tuple(self.truth[i] for i in idx) if self.truth is not None else None
        return LabeledCollection(tuple(self.batches[i] for i in idx), truth)


@dataclass(frozen=True)
class KIntervalHypothesis:
    """Classifier mapping a union of at most k intervals to label 1."""

    decision_region: IntervalUnion

    @property
    def k(self) -> int:
        return self.decision_region.k

    def predict(self, x) -> np.ndarray:
        return self.decision_region.contains(x).astype(np.int64)


def risk(h: KIntervalHypothesis, x, y, weights=None) -> float:
    """Weighted misclassification rate of ``h`` on labeled samples."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if weights is None:
        weights = np.full(x.size, 1.0 / x.size)
    else:
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0):
            raise UsageError("weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > 1e-9:
            raise UsageError("weights must sum to 1")
    wrong = h.predict(x) != y
    return float(weights[wrong].sum())


def _group_by_position(x: np.ndarray, y: np.ndarray, weights: np.ndarray):
    """Distinct positions with accumulated label weights (tied x values must
    be classified together)."""
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], weights[order]
    pos, start = np.unique(xs, return_index=True)
    w0 = np.add.reduceat(np.where(ys == 0, ws, 0.0), start)
    w1 = np.add.reduceat(np.where(ys == 1, ws, 0.0), start)
    return pos, w0, w1


def erm_k_intervals(x, y, k: int, weights=None) -> KIntervalHypothesis:
    """Exact weighted-loss minimizer over k-interval decision regions.

    Runs the O(s*k) dynamic program over distinct sample positions; region
    endpoints land at midpoints between consecutive distinct x values (the
    outermost runs extend to the infinities).  Ties prefer fewer intervals.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if k < 1:
        raise DomainError("k must be at least 1")
    if x.ndim != 1 or x.size == 0 or y.shape != x.shape:
        raise UsageError("x and y must be matching nonempty 1-d arrays")
    if weights is None:
        weights = np.ones(x.size)
    else:
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0):
            raise UsageError("weights must be nonnegative")
    pos, w0, w1 = _group_by_position(x, y, weights)
    g = pos.size
    inf = math.inf
    out = [0.0] + [inf] * k
    ins = [inf] * (k + 1)
    # parent codes per group: 0 stay-out, 1 close, 2 continue-in, 3 open
    choices = np.zeros((g, k + 1, 2), dtype=np.int8)
    for gi in range(g):
        new_out = [inf] * (k + 1)
        new_ins = [inf] * (k + 1)
        for j in range(k + 1):
            stay, close = out[j], ins[j]
            if stay <= close:
                new_out[j], choices[gi, j, 0] = stay + w1[gi], 0
            else:
                new_out[j], choices[gi, j, 0] = close + w1[gi], 1
            cont = ins[j]
            opened = out[j - 1] if j >= 1 else inf
            if cont <= opened:
                if cont < inf:
                    new_ins[j], choices[gi, j, 1] = cont + w0[gi], 2
            elif opened < inf:
                new_ins[j], choices[gi, j, 1] = opened + w0[gi], 3
        out, ins = new_out, new_ins
    best_j, best_state, best_cost = 0, 0, inf
    for j in range(k + 1):
        for state, cost in ((0, out[j]), (1, ins[j])):
            if cost < best_cost:
                best_j, best_state, best_cost = j, state, cost
    inside = np.zeros(g, dtype=bool)
    j, state = best_j, best_state
    for gi in range(g - 1, -1, -1):
        code = choices[gi, j, state]
        inside[gi] = state == 1
        if state == 1 and code == 3:
            state = 0
            j -= 1
        elif state == 0 and code == 1:
            state = 1
    intervals = []
    gi = 0
    while gi < g:
        if inside[gi]:
            start = gi
            while gi + 1 < g and inside[gi + 1]:
                gi += 1
            lo = -math.inf if start == 0 else 0.5 * (pos[start - 1] + pos[start])
            hi = math.inf if gi == g - 1 else 0.5 * (pos[gi] + pos[gi + 1])
            intervals.append(Interval(lo, hi))
        gi += 1
    return KIntervalHypothesis(IntervalUnion(tuple(intervals)))


@dataclass(frozen=True)
class ClassifyReport:
    """Cleaning and risk summary of a robust classification run."""

    retained_ids: tuple[int, ...]
    k: int
    beta: float
    ell_label0: int
    ell_label1: int
    rounds: int
    train_risk: float
    retention_good: float | None = None
    risk_vs_target: float | None = None
    excess_risk: float | None = None

    def to_dict(self) -> dict:
        return {
            "retained_ids": list(self.retained_ids),
            "k": self.k,
            "beta": self.beta,
            "ell_label0": self.ell_label0,
            "ell_label1": self.ell_label1,
            "rounds": self.rounds,
            "train_risk": self.train_risk,
            "retention_good": self.retention_good,
            "risk_vs_target": self.risk_vs_target,
            "excess_risk": self.excess_risk,
        }


def _label_slice_counts(collection: LabeledCollection, label: int, ell: int):
    pooled = np.sort(
        np.concatenate([b.x[b.y == label] for b in collection.batches])
    )
    if pooled.size == 0:
        return None, np.zeros((collection.m, 0), dtype=np.int64)
    ell_eff = max(1, min(ell, pooled.size))
    part = build_partition(pooled, ell_eff)
    counts = np.zeros((collection.m, part.ell), dtype=np.int64)
    for i, b in enumerate(collection.batches):
        xs = b.x[b.y == label]
        counts[i] = np.bincount(part.bin_of(xs), minlength=part.ell)
    return part, counts


def robust_classify(
    collection: LabeledCollection,
    k: int,
    beta: float,
    rng: np.random.Generator,
    detector: str = "spectral",
    trigger_factor: float = TRIGGER_FACTOR,
    stop_factor: float = STOP_FACTOR,
    candidates_budget: int | None = None,
    reference=None,
) -> tuple[KIntervalHypothesis, ClassifyReport]:
    """Clean labeled batches over a per-label discretization, then run ERM.

    Each label slice gets its own data-driven partition (ell bins, clamped
    to the slice size); a batch's feature vector is the concatenation of
    its per-label bin counts, and cleaning runs over all subsets of that
    product domain.  ``reference`` (simulation mode) must expose
    ``risk_of(hypothesis)`` and ``optimal_risk()`` for the excess-risk
    entries of the report.
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
    sizing_beta = beta if beta > 0.0 else 0.1
    ell = choose_ell(k, n, sizing_beta, m)
    part0, counts0 = _label_slice_counts(collection, 0, ell)
    part1, counts1 = _label_slice_counts(collection, 1, ell)
    counts = np.concatenate([counts0, counts1], axis=1)
    disc = DiscretizedCollection(counts, collection.ids, n, collection.truth)
    rounds = 0
    if beta > 0.0:
        params = CorruptionParams(beta, n, m)
        cleaned, rounds = clean_discrete(
            disc, params, rng, detector, trigger_factor, stop_factor, candidates_budget
        )
        retained = collection.subset(cleaned.ids)
    else:
        retained = collection
    x, y = retained.pooled()
    hypothesis = erm_k_intervals(x, y, k)
    train = risk(hypothesis, x, y)
    retention = None
    if collection.truth is not None:
        good = collection.good_ids()
        if good:
            retention = len(good & set(retained.ids)) / len(good)
    risk_target = excess = None
    if reference is not None:
        risk_target = float(reference.risk_of(hypothesis))
        excess = risk_target - float(reference.optimal_risk())
    report = ClassifyReport(
        retained_ids=retained.ids,
        k=k,
        beta=beta,
        ell_label0=counts0.shape[1],
        ell_label1=counts1.shape[1],
        rounds=rounds,
        train_risk=train,
        retention_good=retention,
        risk_vs_target=risk_target,
        excess_risk=excess,
    )
    return hypothesis, report
