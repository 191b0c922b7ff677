"""Data-driven interval partitions and bin-subset geometry.

The ell-cell partition places boundaries at every Delta-th pooled order
statistic, Delta = ceil(s/ell), so each cell holds at most Delta of the s
points.  Cells are left-open/right-closed: (-inf, c1], (c1, c2], ...,
(c_{ell-1}, inf).  Bin subsets D of [ell] lift back to unions of at most
|D| real intervals.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Batch,
    BatchCollection,
    DiscretizedCollection,
    DomainError,
    UsageError,
)

_CEIL_SLACK = 1e-9  # guards ceil() against float noise on exact integers


@dataclass(frozen=True)
class Interval:
    """A real interval with explicit endpoint closedness."""

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise UsageError("interval endpoints must not be NaN")
        if self.lo > self.hi:
            raise UsageError(f"empty interval ({self.lo}, {self.hi})")
        if math.isinf(self.lo) and self.lo_closed:
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(self.hi) and self.hi_closed:
            object.__setattr__(self, "hi_closed", False)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        left = x >= self.lo if self.lo_closed else x > self.lo
        right = x <= self.hi if self.hi_closed else x < self.hi
        return left & right


@dataclass(frozen=True)
class IntervalUnion:
    """A sorted union of pairwise-disjoint intervals (possibly empty)."""

    intervals: tuple[Interval, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", tuple(self.intervals))
        for a, b in zip(self.intervals, self.intervals[1:]):
            if b.lo < a.hi or (b.lo == a.hi and (a.hi_closed and b.lo_closed)):
                raise UsageError("intervals must be sorted and disjoint")

    @property
    def k(self) -> int:
        return len(self.intervals)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for iv in self.intervals:
            out |= iv.contains(x)
        return out


@dataclass(frozen=True)
class BinSubset:
    """A subset D of the bin indices {1, ..., ell} (1-based)."""

    members: frozenset[int]

    def __post_init__(self) -> None:
        members = frozenset(int(i) for i in self.members)
        if any(i < 1 for i in members):
            raise UsageError("bin indices are 1-based")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, *indices: int) -> "BinSubset":
        return cls(frozenset(indices))

    @classmethod
    def from_mask(cls, mask) -> "BinSubset":
        mask = np.asarray(mask, dtype=bool)
        return cls(frozenset(int(i) + 1 for i in np.nonzero(mask)[0]))

    def indices0(self) -> np.ndarray:
        """Sorted 0-based index array."""
        return np.array(sorted(self.members), dtype=np.int64) - 1

    def as_mask(self, ell: int) -> np.ndarray:
        if self.members and max(self.members) > ell:
            raise UsageError(f"bin subset exceeds ell={ell}")
        mask = np.zeros(ell, dtype=bool)
        mask[self.indices0()] = True
        return mask

    def runs(self) -> list[tuple[int, int]]:
        """Maximal runs of consecutive members as 1-based (start, end) pairs."""
        out: list[tuple[int, int]] = []
        for i in sorted(self.members):
            if out and i == out[-1][1] + 1:
                out[-1] = (out[-1][0], i)
            else:
                out.append((i, i))
        return out

    def bitmask(self) -> int:
        return sum(1 << (i - 1) for i in self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, i: int) -> bool:
        return i in self.members


EMPTY_SUBSET = BinSubset(frozenset())


@dataclass(frozen=True)
class IntervalPartition:
    """ell cells of the real line cut at strictly increasing boundaries.

    ``source_token`` fingerprints the pooled samples the partition was built
    from; :func:`discretize` uses it to reject foreign collections.
    """

    boundaries: tuple[float, ...]
    source_token: str | None = None

    def __post_init__(self) -> None:
        bnd = tuple(float(b) for b in self.boundaries)
        if any(math.isnan(b) or math.isinf(b) for b in bnd):
            raise UsageError("boundaries must be finite")
        if any(a >= b for a, b in zip(bnd, bnd[1:])):
            raise UsageError("boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", bnd)

    @property
    def ell(self) -> int:
        return len(self.boundaries) + 1

    def bin_of(self, x) -> np.ndarray:
        """0-based cell index of each value (cells are (c_{j-1}, c_j])."""
        x = np.asarray(x, dtype=float)
        return np.searchsorted(np.asarray(self.boundaries), x, side="left")

    def cell(self, j: int) -> Interval:
        """The 1-based j-th cell as an interval."""
        if not 1 <= j <= self.ell:
            raise UsageError(f"cell index {j} outside 1..{self.ell}")
        lo = -math.inf if j == 1 else self.boundaries[j - 2]
        hi = math.inf if j == self.ell else self.boundaries[j - 1]
        return Interval(lo, hi, lo_closed=False, hi_closed=not math.isinf(hi))

    def to_dict(self) -> dict:
        out = {"ell": self.ell, "boundaries": list(self.boundaries)}
        if self.source_token is not None:
            out["source_token"] = self.source_token
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "IntervalPartition":
        part = cls(tuple(d["boundaries"]), d.get("source_token"))
        if "ell" in d and int(d["ell"]) != part.ell:
            raise UsageError("ell does not match the number of boundaries")
        return part


def _samples_token(sorted_samples: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(sorted_samples).tobytes()).hexdigest()[:16]


def choose_ell(k: int, n: int, beta: float, m: int | None = None) -> int:
    """Partition size ell = ceil(2k*sqrt(n)/beta), clamped to the sample count."""
    if k < 1:
        raise DomainError("k must be at least 1")
    if n < 1:
        raise DomainError("n must be positive")
    if not 0.0 < beta <= 0.4:
        raise DomainError(f"beta must lie in (0, 0.4], got {beta}")
    ell = math.ceil(2.0 * k * math.sqrt(n) / beta - _CEIL_SLACK)
    if m is not None:
        ell = min(ell, n * m)
    return max(ell, 1)


def build_partition(all_samples: np.ndarray, ell: int) -> IntervalPartition:
    """Cut the sorted pooled samples into ``ell`` cells of at most Delta points.

    Boundaries sit at the Delta-th, 2*Delta-th, ... order statistics with
    Delta = ceil(s/ell).  Runs of identical boundary values are collapsed,
    so under heavy ties the realized cell count can drop below ell and a
    cell can exceed Delta points; the realized occupancy is reported by
    :func:`cell_occupancy`.
    """
    x = np.asarray(all_samples, dtype=float)
    if x.ndim != 1:
        raise UsageError("samples must be 1-d")
    s = x.size
    if ell < 1:
        raise DomainError("ell must be at least 1")
    if s < ell:
        raise UsageError(f"need at least ell={ell} samples, got {s}")
    if np.any(np.diff(x) < 0):
        raise UsageError("samples must be sorted non-decreasing")
    if ell == 1:
        return IntervalPartition((), _samples_token(x))
    delta = math.ceil(s / ell)
    cut_positions = [min(j * delta, s) for j in range(1, ell)]
    boundaries: list[float] = []
    for pos in cut_positions:
        val = float(x[pos - 1])
        if not boundaries or val > boundaries[-1]:
            boundaries.append(val)
    return IntervalPartition(tuple(boundaries), _samples_token(x))


def cell_occupancy(partition: IntervalPartition, sorted_samples: np.ndarray) -> np.ndarray:
    """Number of samples in each cell (length ell)."""
    idx = partition.bin_of(sorted_samples)
    return np.bincount(idx, minlength=partition.ell)


def discretize(collection: BatchCollection, partition: IntervalPartition) -> DiscretizedCollection:
    """Map every batch to its per-cell counts under ``partition``.

    When the partition carries a source token it must match the pooled
    samples of ``collection``; hand-built partitions (no token) skip the
    check.
    """
    if partition.source_token is not None:
        token = _samples_token(collection.pooled_samples())
        if token != partition.source_token:
            raise UsageError("partition was not built from this collection's samples")
    ell = partition.ell
    counts = np.zeros((collection.m, ell), dtype=np.int64)
    for i, b in enumerate(collection.batches):
        counts[i] = np.bincount(partition.bin_of(b.samples), minlength=ell)
    return DiscretizedCollection(counts, collection.ids, collection.n, collection.truth)


def discretize_batch(batch: Batch, partition: IntervalPartition) -> np.ndarray:
    """Per-cell counts of a single batch (no token check)."""
    return np.bincount(partition.bin_of(batch.samples), minlength=partition.ell)


def lift_subset(subset: BinSubset, partition: IntervalPartition) -> IntervalUnion:
    """The real-line union of the cells named by ``subset``, runs merged."""
    ell = partition.ell
    if subset.members and max(subset.members) > ell:
        raise UsageError(f"bin subset exceeds ell={ell}")
    intervals = []
    for a, b in subset.runs():
        lo = -math.inf if a == 1 else partition.boundaries[a - 2]
        hi = math.inf if b == ell else partition.boundaries[b - 1]
        intervals.append(Interval(lo, hi, lo_closed=False, hi_closed=not math.isinf(hi)))
    return IntervalUnion(tuple(intervals))
