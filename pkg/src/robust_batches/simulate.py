"""Ground-truth simulation: structured targets, batch generators, attacks.

Collections are reproducible: batch i draws from a generator seeded with
(seed, i), so generation order (or parallelism) cannot change the output.
Adversarial batches are generated after the good ones and may read the
realized good samples, matching an adaptive adversary.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .classify import KIntervalHypothesis, LabeledBatch, LabeledCollection
from .core import ADVERSARIAL, GOOD, Batch, BatchCollection, DomainError, UsageError
from .distance import fk_distance, max_sum_k_interval_union
from .estimate import PiecewisePolynomial, evaluate_density, fit_piecewise
from .partition import IntervalPartition, IntervalUnion, build_partition, discretize, lift_subset

_FLOOR_SLACK = 1e-9


def batch_rng(seed: int, batch_id: int) -> np.random.Generator:
    """Generator for one batch, derived from (seed, batch id)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(batch_id,))))


def _bin_masses_from_cdf(cdf, partition: IntervalPartition) -> np.ndarray:
    cuts = np.asarray(partition.boundaries, dtype=float)
    inner = cdf(cuts) if cuts.size else np.zeros(0)
    full = np.concatenate(([0.0], inner, [1.0]))
    return np.diff(full)


@dataclass(frozen=True)
class UniformTarget:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise DomainError("uniform target needs lo < hi")

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random(size)

    def support(self) -> tuple[float, float]:
        return self.lo, self.hi

    def breakpoints(self) -> list[float]:
        return [self.lo, self.hi]

    def bin_masses(self, partition: IntervalPartition) -> np.ndarray:
        return _bin_masses_from_cdf(self.cdf, partition)

    def describe(self) -> str:
        return f"uniform:{self.lo},{self.hi}"


@dataclass(frozen=True)
class HistogramTarget:
    """Piecewise-constant density over consecutive cells."""

    edges: tuple[float, ...]
    masses: tuple[float, ...]

    def __post_init__(self) -> None:
        edges = tuple(float(e) for e in self.edges)
        masses = tuple(float(w) for w in self.masses)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)
        if len(edges) != len(masses) + 1 or len(masses) < 1:
            raise DomainError("need one more edge than mass")
        if any(a >= b for a, b in zip(edges, edges[1:])):
            raise DomainError("edges must be strictly increasing")
        if any(w < 0 for w in masses) or abs(sum(masses) - 1.0) > 1e-9:
            raise DomainError("masses must be a probability vector")

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.asarray(self.edges)
        idx = np.clip(np.searchsorted(e, x, side="right") - 1, 0, len(self.masses) - 1)
        dens = np.asarray(self.masses) / np.diff(e)
        return np.where((x >= e[0]) & (x <= e[-1]), dens[idx], 0.0)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.asarray(self.edges)
        cum = np.concatenate(([0.0], np.cumsum(self.masses)))
        idx = np.clip(np.searchsorted(e, x, side="right") - 1, 0, len(self.masses) - 1)
        frac = np.clip((x - e[idx]) / (e[idx + 1] - e[idx]), 0.0, 1.0)
        out = cum[idx] + frac * np.asarray(self.masses)[idx]
        return np.clip(np.where(x < e[0], 0.0, np.where(x > e[-1], 1.0, out)), 0.0, 1.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        cum = np.concatenate(([0.0], np.cumsum(self.masses)))
        cum[-1] = 1.0
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(self.masses) - 1)
        e = np.asarray(self.edges)
        w = np.asarray(self.masses)
        frac = np.where(w[idx] > 0, (u - cum[idx]) / np.where(w[idx] > 0, w[idx], 1.0), 0.0)
        return e[idx] + frac * (e[idx + 1] - e[idx])

    def support(self) -> tuple[float, float]:
        return self.edges[0], self.edges[-1]

    def breakpoints(self) -> list[float]:
        return list(self.edges)

    def bin_masses(self, partition: IntervalPartition) -> np.ndarray:
        return _bin_masses_from_cdf(self.cdf, partition)

    def describe(self) -> str:
        return "hist:" + ",".join(map(str, self.edges)) + "|" + ",".join(map(str, self.masses))


@dataclass(frozen=True)
class PiecewisePolynomialTarget:
    """Analytic target backed by a piecewise-polynomial density."""

    density: PiecewisePolynomial

    def pdf(self, x) -> np.ndarray:
        return self.density.pdf(x)

    def cdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([self.density.mass_between(self.density.support[0], v) for v in x])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        bp = self.density.breakpoints
        piece_mass = np.array(
            [self.density.mass_between(a, b) for a, b in zip(bp, bp[1:])]
        )
        cum = np.concatenate(([0.0], np.cumsum(piece_mass)))
        cum[-1] = max(cum[-1], 1.0)
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(piece_mass) - 1)
        out = np.empty(size)
        for j in np.unique(idx):
            sel = idx == j
            out[sel] = self._invert_piece(j, u[sel] - cum[j])
        return out

    def _invert_piece(self, j: int, residual: np.ndarray) -> np.ndarray:
        """Solve mass_between(a, x) = residual inside piece j."""
        a, b = self.density.breakpoints[j], self.density.breakpoints[j + 1]
        coef = np.asarray(self.density.coefficients[j])
        if coef.size <= 2:
            c0 = float(coef[0]) if coef.size > 0 else 0.0
            c1 = float(coef[1]) if coef.size > 1 else 0.0
            # antiderivative c0*(x-a) + c1*(x^2-a^2)/2 = residual
            if abs(c1) < 1e-14:
                width = b - a
                out = a + np.where(c0 > 0, residual / max(c0, 1e-300), 0.5 * width)
                return np.clip(out, a, b)
            disc = (c0 + c1 * a) ** 2 + 2.0 * c1 * residual
            root = (-c0 + np.sqrt(np.clip(disc, 0.0, None))) / c1
            return np.clip(root, a, b)
        from scipy import optimize as _opt

        out = np.empty(residual.size)
        for i, r in enumerate(residual):
            out[i] = _opt.brentq(lambda x: self.density.mass_between(a, x) - r, a, b)
        return out

    def support(self) -> tuple[float, float]:
        return self.density.support

    def breakpoints(self) -> list[float]:
        return list(self.density.breakpoints)

    def bin_masses(self, partition: IntervalPartition) -> np.ndarray:
        return self.density.bin_masses(partition)

    def describe(self) -> str:
        bks = ",".join(map(str, self.density.breakpoints))
        pieces = ";".join(" ".join(map(str, p)) for p in self.density.coefficients)
        return f"pwpoly:{bks}|{pieces}"


@dataclass(frozen=True)
class GaussianMixtureTarget:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]

    def __post_init__(self) -> None:
        w = tuple(float(v) for v in self.weights)
        if abs(sum(w) - 1.0) > 1e-9 or any(v < 0 for v in w):
            raise DomainError("mixture weights must be a probability vector")
        if len(w) != len(self.means) or len(w) != len(self.sds):
            raise DomainError("weights, means, sds must have one length")
        if any(s <= 0 for s in self.sds):
            raise DomainError("component sds must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", tuple(float(v) for v in self.means))
        object.__setattr__(self, "sds", tuple(float(v) for v in self.sds))

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, mu, sd in zip(self.weights, self.means, self.sds):
            z = (x - mu) / sd
            out += w * np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))
        return out

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, mu, sd in zip(self.weights, self.means, self.sds):
            out += w * special.ndtr((x - mu) / sd)
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # component choice then inverse-CDF, so a fixed generator stream
        # always yields the same points
        u_comp = rng.random(size)
        u_val = rng.random(size)
        cum = np.concatenate(([0.0], np.cumsum(self.weights)))
        cum[-1] = 1.0
        idx = np.clip(np.searchsorted(cum, u_comp, side="right") - 1, 0, len(self.weights) - 1)
        mu = np.asarray(self.means)[idx]
        sd = np.asarray(self.sds)[idx]
        u_val = np.clip(u_val, 1e-15, 1.0 - 1e-15)
        return mu + sd * special.ndtri(u_val)

    def support(self) -> tuple[float, float]:
        lo = min(m - 12.0 * s for m, s in zip(self.means, self.sds))
        hi = max(m + 12.0 * s for m, s in zip(self.means, self.sds))
        return lo, hi

    def breakpoints(self) -> list[float]:
        lo, hi = self.support()
        return sorted({lo, hi, *self.means})

    def bin_masses(self, partition: IntervalPartition) -> np.ndarray:
        return _bin_masses_from_cdf(self.cdf, partition)

    def describe(self) -> str:
        return "gm:" + "+".join(
            f"{w}N({m},{s})" for w, m, s in zip(self.weights, self.means, self.sds)
        )


@dataclass(frozen=True)
class ClassificationTarget:
    """Joint (X, Y) law: X from a cell histogram, Y Bernoulli(eta) per cell."""

    edges: tuple[float, ...]
    masses: tuple[float, ...]
    eta: tuple[float, ...]

    def __post_init__(self) -> None:
        marg = HistogramTarget(self.edges, self.masses)  # validates edges/masses
        object.__setattr__(self, "edges", marg.edges)
        object.__setattr__(self, "masses", marg.masses)
        eta = tuple(float(v) for v in self.eta)
        if len(eta) != len(self.masses) or any(not 0 <= v <= 1 for v in eta):
            raise DomainError("eta must give one probability per cell")
        object.__setattr__(self, "eta", eta)

    def _marginal(self) -> HistogramTarget:
        return HistogramTarget(self.edges, self.masses)

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        x = self._marginal().sample(rng, size)
        cell = np.clip(
            np.searchsorted(np.asarray(self.edges), x, side="right") - 1,
            0,
            len(self.masses) - 1,
        )
        y = (rng.random(size) < np.asarray(self.eta)[cell]).astype(np.int64)
        return x, y

    def eta_at(self, x) -> np.ndarray:
        cell = np.clip(
            np.searchsorted(np.asarray(self.edges), np.asarray(x, dtype=float), side="right") - 1,
            0,
            len(self.masses) - 1,
        )
        return np.asarray(self.eta)[cell]

    def bayes_hypothesis(self) -> KIntervalHypothesis:
        from .partition import Interval

        intervals = []
        run = None
        for j, e in enumerate(self.eta):
            if e > 0.5:
                if run is None:
                    run = [self.edges[j], self.edges[j + 1]]
                else:
                    run[1] = self.edges[j + 1]
            elif run is not None:
                intervals.append(Interval(run[0], run[1], hi_closed=False))
                run = None
        if run is not None:
            intervals.append(Interval(run[0], run[1]))
        return KIntervalHypothesis(IntervalUnion(tuple(intervals)))

    def optimal_risk(self) -> float:
        return float(sum(m * min(e, 1.0 - e) for m, e in zip(self.masses, self.eta)))

    def risk_of(self, h: KIntervalHypothesis) -> float:
        """Exact risk of a k-interval hypothesis under this law."""
        total = 0.0
        for j, (m, e) in enumerate(zip(self.masses, self.eta)):
            a, b = self.edges[j], self.edges[j + 1]
            inside = 0.0
            for iv in h.decision_region.intervals:
                inside += max(0.0, min(b, iv.hi) - max(a, iv.lo))
            frac = inside / (b - a)
            total += m * (frac * (1.0 - e) + (1.0 - frac) * e)
        return float(total)

    def describe(self) -> str:
        return (
            "labeled:"
            + ",".join(map(str, self.edges))
            + "|"
            + ",".join(map(str, self.masses))
            + "|"
            + ",".join(map(str, self.eta))
        )


@dataclass(frozen=True)
class SimContext:
    """What an adaptive adversary gets to see before writing its batches."""

    target: object
    beta: float
    n: int
    good_x: np.ndarray
    good_y: np.ndarray | None = None
    good_batch_samples: tuple[np.ndarray, ...] | None = None
    cache: dict = field(default_factory=dict, compare=False)


class _AttackBase:
    labeled = False

    def generate(self, batch_id: int, rng: np.random.Generator, ctx: SimContext):
        raise NotImplementedError


@dataclass(frozen=True)
class MeanShiftAttack(_AttackBase):
    """Target draw with a `magnitude` fraction of the mass relocated into a region."""

    magnitude: float
    region: tuple[float, float]

    def generate(self, batch_id: int, rng: np.random.Generator, ctx: SimContext) -> np.ndarray:
        xs = ctx.target.sample(rng, ctx.n)
        moved = int(round(self.magnitude * ctx.n))
        if moved > 0:
            idx = rng.choice(ctx.n, size=min(moved, ctx.n), replace=False)
            lo, hi = self.region
            xs[idx] = lo + (hi - lo) * rng.random(idx.size)
        return xs

    def describe(self) -> str:
        return f"mean_shift:{self.magnitude}@{self.region[0]},{self.region[1]}"


@dataclass(frozen=True)
class SpikeAttack(_AttackBase):
    """Target draw with a `magnitude` fraction of samples set to one point."""

    magnitude: float
    point: float

    def generate(self, batch_id: int, rng: np.random.Generator, ctx: SimContext) -> np.ndarray:
        xs = ctx.target.sample(rng, ctx.n)
        moved = int(round(self.magnitude * ctx.n))
        if moved > 0:
            idx = rng.choice(ctx.n, size=min(moved, ctx.n), replace=False)
            xs[idx] = self.point
        return xs

    def describe(self) -> str:
        return f"spike:{self.magnitude}@{self.point}"


@dataclass(frozen=True)
class ReplaySkewAttack(_AttackBase):
    """Resamples the realized good samples, biased toward a region."""

    magnitude: float
    region: tuple[float, float]

    def generate(self, batch_id: int, rng: np.random.Generator, ctx: SimContext) -> np.ndarray:
        pool = ctx.good_x
        lo, hi = self.region
        in_region = pool[(pool >= lo) & (pool <= hi)]
        biased = rng.random(ctx.n) < self.magnitude
        out = np.empty(ctx.n)
        n_biased = int(biased.sum())
        source = in_region if in_region.size else pool
        if n_biased:
            out[biased] = source[rng.integers(0, source.size, n_biased)]
        if ctx.n - n_biased:
            out[~biased] = pool[rng.integers(0, pool.size, ctx.n - n_biased)]
        return out

    def describe(self) -> str:
        return f"replay_skew:{self.magnitude}@{self.region[0]},{self.region[1]}"


@dataclass(frozen=True)
class LabelFlipAttack(_AttackBase):
    """Concentrates a `magnitude` fraction of each batch in a region and
    labels everything in the region with the wrong (anti-Bayes) class."""

    magnitude: float
    region: tuple[float, float]
    labeled = True

    def generate(self, batch_id: int, rng: np.random.Generator, ctx: SimContext):
        x, y = ctx.target.sample(rng, ctx.n)
        moved = int(round(self.magnitude * ctx.n))
        lo, hi = self.region
        if moved > 0:
            idx = rng.choice(ctx.n, size=min(moved, ctx.n), replace=False)
            x[idx] = lo + (hi - lo) * rng.random(idx.size)
        in_region = (x >= lo) & (x <= hi)
        wrong = (ctx.target.eta_at(x) <= 0.5).astype(np.int64)
        y[in_region] = wrong[in_region]
        return x, y

    def describe(self) -> str:
        return f"label_flip:{self.magnitude}@{self.region[0]},{self.region[1]}"


@dataclass(frozen=True)
class FkTargetedAttack(_AttackBase):
    """Pushes the pooled empirical toward a fixed alternative at the
    interval-union witness bins, each batch deviating just above tau."""

    magnitude: float
    k: int = 2
    margin: float = 1.05

    def generate(self, batch_id: int, rng: np.random.Generator, ctx: SimContext) -> np.ndarray:
        plan = _fk_attack_plan(ctx, self.magnitude, self.k)
        return _fk_attack_batch(plan, ctx, rng, self.margin)

    def describe(self) -> str:
        return f"fk_targeted:{self.magnitude}@{self.k}"


@dataclass(frozen=True)
class _FkAttackPlan:
    region: IntervalUnion
    med_good: float
    tau: float


def _fk_attack_plan(ctx: SimContext, magnitude: float, k: int) -> _FkAttackPlan:
    """Witness region and good-median, computed once per context."""
    key = ("fk_plan", magnitude, k)
    if key in ctx.cache:
        return ctx.cache[key]
    if ctx.good_batch_samples is None or not ctx.good_batch_samples:
        raise UsageError("the targeted attack needs the realized good batches")
    from .partition import BinSubset

    pool = np.sort(ctx.good_x)
    part = build_partition(pool, min(64, pool.size))
    empirical_cdf = lambda c: np.searchsorted(pool, c, side="right") / pool.size
    good = _bin_masses_from_cdf(empirical_cdf, part)
    alt = good * (1.0 - magnitude)
    alt[len(alt) // 3] += magnitude  # fixed alternative: one mid-domain cell inflated
    # the witness must sit where the alternative EXCEEDS the good mass
    # (the absolute maximizer ties with its complement on zero-sum vectors)
    _, witness = max_sum_k_interval_union(alt - good, k)
    members = witness.members if witness.members else frozenset({1})
    region = lift_subset(BinSubset(members), part)
    per_batch = np.array([float(region.contains(s).mean()) for s in ctx.good_batch_samples])
    med = float(np.median(per_batch))
    tau = 3.0 * math.sqrt(math.log(6.0 * math.e / ctx.beta) / ctx.n)
    plan = _FkAttackPlan(region, med, tau)
    ctx.cache[key] = plan
    return plan


def _fk_attack_batch(
    plan: _FkAttackPlan, ctx: SimContext, rng: np.random.Generator, margin: float
) -> np.ndarray:
    xs = ctx.target.sample(rng, ctx.n)
    goal = min(1.0, plan.med_good + margin * plan.tau)
    inside = plan.region.contains(xs)
    need = int(math.ceil(goal * ctx.n)) - int(inside.sum())
    if need > 0:
        outside_idx = np.nonzero(~inside)[0][:need]
        iv = plan.region.intervals[0]
        lo = iv.lo if math.isfinite(iv.lo) else float(ctx.good_x.min()) - 1.0
        hi = iv.hi if math.isfinite(iv.hi) else float(ctx.good_x.max()) + 1.0
        draws = lo + (hi - lo) * rng.random(outside_idx.size)
        # cells are open on the left; nudge exact-boundary draws inward
        draws[draws <= lo] = np.nextafter(lo, hi)
        xs[outside_idx] = draws
    return xs


def attack_fk_targeted(good_batches, target, k: int, n: int, count: int, beta: float, seed: int):
    """Adversarial batches aimed at the pooled empirical's witness bins.

    Every returned batch's empirical probability of the targeted region
    exceeds the good median by more than tau (construction invariant).
    """
    if count < 0:
        raise DomainError("count must be nonnegative")
    if count == 0:
        return []
    samples = tuple(
        np.asarray(b.samples if isinstance(b, Batch) else b, dtype=float) for b in good_batches
    )
    ctx = SimContext(
        target=target,
        beta=beta,
        n=n,
        good_x=np.concatenate(samples),
        good_batch_samples=samples,
    )
    attack = FkTargetedAttack(magnitude=0.3, k=k)
    return [attack.generate(i, batch_rng(seed, 10_000_000 + i), ctx) for i in range(count)]


def _map_indexed(fn, ids, threads: int) -> list:
    """Order-preserving map; per-id rngs make the result thread-safe."""
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, ids))
    return [fn(i) for i in ids]


def build_collection(target, attack, m: int, n: int, beta: float, seed: int, threads: int = 1):
    """floor((1-beta)m) good batches from the target, the rest from the attack.

    Good batches come first (ids 0..), adversarial ones after; the attack
    sees the realized good samples.  Identical seeds give identical
    collections byte for byte, regardless of ``threads``.
    """
    if not 0.0 <= beta <= 0.4:
        raise DomainError(f"beta must lie in [0, 0.4], got {beta}")
    if m < 1 or n < 1:
        raise DomainError("m and n must be positive")
    n_good = int(math.floor((1.0 - beta) * m + _FLOOR_SLACK))
    n_adv = m - n_good
    if n_adv > 0 and attack is None:
        raise UsageError("beta > 0 requires an attack")
    labeled = isinstance(target, ClassificationTarget)

    def make_good(i: int):
        rng = batch_rng(seed, i)
        if labeled:
            x, y = target.sample(rng, n)
            return LabeledBatch(i, x, y)
        return Batch(i, target.sample(rng, n))

    good_batches = _map_indexed(make_good, range(n_good), threads)
    if labeled:
        gx = np.concatenate([b.x for b in good_batches]) if good_batches else np.zeros(0)
        gy = np.concatenate([b.y for b in good_batches]) if good_batches else np.zeros(0, int)
        ctx = SimContext(target=target, beta=max(beta, 1e-9), n=n, good_x=gx, good_y=gy)
    else:
        samples = tuple(b.samples for b in good_batches)
        gx = np.concatenate(samples) if samples else np.zeros(0)
        ctx = SimContext(
            target=target, beta=max(beta, 1e-9), n=n, good_x=gx, good_batch_samples=samples
        )
    # adversarial generation stays sequential: batches share the attack plan
    adv_batches = []
    for i in range(n_good, m):
        rng = batch_rng(seed, i)
        made = attack.generate(i, rng, ctx)
        if labeled:
            adv_batches.append(LabeledBatch(i, made[0], made[1]))
        else:
            adv_batches.append(Batch(i, made))
    truth = tuple([GOOD] * n_good + [ADVERSARIAL] * n_adv)
    if labeled:
        return LabeledCollection(tuple(good_batches + adv_batches), truth)
    return BatchCollection(tuple(good_batches + adv_batches), truth)


def metrics(
    collection,
    retained_ids,
    target,
    k: int,
    partition: IntervalPartition | None = None,
    fit: PiecewisePolynomial | None = None,
    hypothesis: KIntervalHypothesis | None = None,
) -> dict:
    """Simulation-mode scoring of a cleaning / estimation / classification run."""
    if collection.truth is None:
        raise UsageError("metrics need truth flags (simulation mode)")
    good = collection.good_ids()
    retained = set(retained_ids)
    out: dict = {
        "retention_good": len(good & retained) / len(good) if good else None,
        "retained": len(retained),
        "m": collection.m,
    }
    if partition is not None and hasattr(target, "bin_masses") and isinstance(collection, BatchCollection):
        ref = target.bin_masses(partition)
        disc = discretize(collection, partition)
        out["fk_before"] = float(fk_distance(disc.pooled(), ref, k))
        out["fk_after"] = float(fk_distance(disc.subset(retained).pooled(), ref, k))
    if fit is not None:
        out["tv_fit"] = float(evaluate_density(fit, target))
    if hypothesis is not None and isinstance(target, ClassificationTarget):
        r = target.risk_of(hypothesis)
        out["risk"] = float(r)
        out["excess_risk"] = float(r - target.optimal_risk())
    return out


def opt_estimate(target, t: int, d: int, resolution: int = 512) -> float:
    """Approximation floor: TV from the target to the best t-piece degree-d
    fit of its own high-resolution discretization."""
    lo, hi = target.support()
    cuts = np.linspace(lo, hi, resolution + 1)[1:-1]
    part = IntervalPartition(tuple(float(c) for c in cuts))
    result = fit_piecewise(target.bin_masses(part), part, t, d, (lo, hi))
    return float(evaluate_density(result.density, target))


_GM_RE = re.compile(r"^([\d.eE+-]+)N\(([\d.eE+-]+),([\d.eE+-]+)\)$")


def parse_target(spec: str):
    """Build a target from its CLI spelling; see the describe() methods."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "uniform":
            lo, hi = (float(v) for v in rest.split(","))
            return UniformTarget(lo, hi)
        if kind == "gm":
            weights, means, sds = [], [], []
            for part in rest.split("+"):
                m = _GM_RE.match(part.strip())
                if not m:
                    raise ValueError(f"bad mixture component {part!r}")
                weights.append(float(m.group(1)))
                means.append(float(m.group(2)))
                sds.append(float(m.group(3)))
            return GaussianMixtureTarget(tuple(weights), tuple(means), tuple(sds))
        if kind == "hist":
            edges_s, masses_s = rest.split("|")
            return HistogramTarget(
                tuple(float(v) for v in edges_s.split(",")),
                tuple(float(v) for v in masses_s.split(",")),
            )
        if kind == "pwpoly":
            bks_s, pieces_s = rest.split("|")
            bks = tuple(float(v) for v in bks_s.split(","))
            coefs = tuple(
                tuple(float(c) for c in piece.split()) for piece in pieces_s.split(";")
            )
            return PiecewisePolynomialTarget(PiecewisePolynomial(bks, coefs))
        if kind == "labeled":
            edges_s, masses_s, eta_s = rest.split("|")
            return ClassificationTarget(
                tuple(float(v) for v in edges_s.split(",")),
                tuple(float(v) for v in masses_s.split(",")),
                tuple(float(v) for v in eta_s.split(",")),
            )
    except (ValueError, DomainError) as exc:
        raise UsageError(f"cannot parse target {spec!r}: {exc}") from exc
    raise UsageError(f"unknown target kind {kind!r}")


def parse_attack(spec: str):
    """Build an attack from its CLI spelling 'kind:magnitude@params'."""
    if spec in ("none", ""):
        return None
    kind, _, rest = spec.partition(":")
    mag_s, _, param = rest.partition("@")
    try:
        mag = float(mag_s)
        if kind == "mean_shift":
            lo, hi = (float(v) for v in param.split(","))
            return MeanShiftAttack(mag, (lo, hi))
        if kind == "spike":
            return SpikeAttack(mag, float(param))
        if kind == "replay_skew":
            lo, hi = (float(v) for v in param.split(","))
            return ReplaySkewAttack(mag, (lo, hi))
        if kind == "label_flip":
            lo, hi = (float(v) for v in param.split(","))
            return LabelFlipAttack(mag, (lo, hi))
        if kind == "fk_targeted":
            return FkTargetedAttack(mag, int(param) if param else 2)
    except (ValueError, DomainError) as exc:
        raise UsageError(f"cannot parse attack {spec!r}: {exc}") from exc
    raise UsageError(f"unknown attack kind {kind!r}")
