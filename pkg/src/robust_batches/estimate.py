"""Piecewise-polynomial density estimation from a cleaned histogram.

The fitter picks piece breakpoints among the partition boundaries by
dynamic programming (per-segment least-squares cost against the bin
masses) and then solves each piece's coefficients under a mass-preserving
equality constraint with nonnegativity enforced at Chebyshev check-points.
Minimizing the squared bin residuals is a surrogate for the interval-union
distance the selection theory wants; the achieved distance is computed
exactly afterwards and reported alongside the fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as npoly
from scipy import integrate, optimize

from .core import DomainError, UsageError
from .distance import best_k_interval_union, fk_distance
from .partition import IntervalPartition

CHEB_POINTS = 64
MAX_DEGREE = 8
MAX_CUT_CANDIDATES = 256

_NONNEG_TOL = 1e-9
_MASS_TOL = 1e-6


def _cheb_nodes(a: float, b: float, count: int = CHEB_POINTS) -> np.ndarray:
    # second-kind (Lobatto) nodes: the piece endpoints are check-points too
    i = np.arange(count)
    return 0.5 * (a + b) + 0.5 * (b - a) * np.cos(i * np.pi / (count - 1))


def _poly_integral(coef: np.ndarray, a: float, b: float) -> float:
    anti = npoly.polyint(np.asarray(coef, dtype=float))
    return float(npoly.polyval(b, anti) - npoly.polyval(a, anti))


@dataclass(frozen=True)
class PiecewisePolynomial:
    """A density made of polynomial pieces on consecutive intervals.

    ``coefficients[j]`` are ascending monomial coefficients on
    ``[breakpoints[j], breakpoints[j+1]]``.  Construction checks
    nonnegativity at Chebyshev check-points of every piece and that the
    total mass is 1 within 1e-6.
    """

    breakpoints: tuple[float, ...]
    coefficients: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        bp = tuple(float(x) for x in self.breakpoints)
        coefs = tuple(tuple(float(c) for c in piece) for piece in self.coefficients)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coefficients", coefs)
        if len(bp) != len(coefs) + 1 or len(coefs) < 1:
            raise UsageError("need t+1 breakpoints for t coefficient lists")
        if any(x >= y for x, y in zip(bp, bp[1:])):
            raise UsageError("breakpoints must be strictly increasing")
        if not all(math.isfinite(x) for x in bp):
            raise UsageError("breakpoints must be finite")
        for j, piece in enumerate(coefs):
            vals = npoly.polyval(_cheb_nodes(bp[j], bp[j + 1]), np.asarray(piece))
            if np.min(vals) < -_NONNEG_TOL:
                raise UsageError(f"piece {j} dips below zero at a check-point")
        if abs(self.integral() - 1.0) > _MASS_TOL:
            raise UsageError(f"density integrates to {self.integral()!r}, not 1")

    @property
    def t(self) -> int:
        return len(self.coefficients)

    @property
    def degree(self) -> int:
        return max(len(piece) for piece in self.coefficients) - 1

    @property
    def support(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        bp = np.asarray(self.breakpoints)
        idx = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, self.t - 1)
        out = np.zeros_like(x)
        inside = (x >= bp[0]) & (x <= bp[-1])
        for j in range(self.t):
            sel = inside & (idx == j)
            if sel.any():
                out[sel] = npoly.polyval(x[sel], np.asarray(self.coefficients[j]))
        return out

    def mass_between(self, a: float, b: float) -> float:
        """Integral of the density over [a, b] (clipped to the support)."""
        if b <= a:
            return 0.0
        total = 0.0
        for j in range(self.t):
            lo, hi = self.breakpoints[j], self.breakpoints[j + 1]
            aa, bb = max(a, lo), min(b, hi)
            if bb > aa:
                total += _poly_integral(self.coefficients[j], aa, bb)
        return total

    def integral(self) -> float:
        return self.mass_between(self.breakpoints[0], self.breakpoints[-1])

    def bin_masses(self, partition: IntervalPartition) -> np.ndarray:
        """Mass assigned to each cell of an interval partition."""
        lo, hi = self.support
        edges = [-math.inf, *partition.boundaries, math.inf]
        out = np.zeros(partition.ell)
        for j in range(partition.ell):
            out[j] = self.mass_between(max(edges[j], lo), min(edges[j + 1], hi))
        return out

    def breakpoint_list(self) -> list[float]:
        return list(self.breakpoints)

    def to_dict(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "coefficients": [list(p) for p in self.coefficients],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewisePolynomial":
        return cls(tuple(d["breakpoints"]), tuple(tuple(p) for p in d["coefficients"]))


@dataclass(frozen=True)
class PiecewiseFitResult:
    """A fitted density plus the exactly-measured distance to its input."""

    density: PiecewisePolynomial
    fk_to_input: float
    fk_family_k: int
    best_effort: bool

    def to_dict(self) -> dict:
        return {
            "density": self.density.to_dict(),
            "fk_to_input": self.fk_to_input,
            "fk_family_k": self.fk_family_k,
            "best_effort": self.best_effort,
        }


def _merge_cells(edges: list[float], masses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop zero-width cells (support edge equal to a boundary), folding
    their mass into the nearest real cell."""
    kept_edges = [edges[0]]
    kept_mass: list[float] = []
    pending = 0.0
    for j, w in enumerate(masses):
        pending += float(w)
        if edges[j + 1] > kept_edges[-1]:
            kept_edges.append(edges[j + 1])
            kept_mass.append(pending)
            pending = 0.0
    if pending:
        kept_mass[-1] += pending
    return np.asarray(kept_edges), np.asarray(kept_mass)


def _segment_cost_matrix(
    cand: np.ndarray, pg: np.ndarray, pb: np.ndarray, pww: np.ndarray
) -> np.ndarray:
    """Unconstrained least-squares cost of fitting one polynomial to every
    candidate cell range, via prefix Gram sums."""
    nc = cand.size
    dim = pb.shape[1]
    cost = np.full((nc, nc), np.inf)
    ii, jj = np.triu_indices(nc, k=1)
    G = pg[cand[jj]] - pg[cand[ii]]
    b = pb[cand[jj]] - pb[cand[ii]]
    c = pww[cand[jj]] - pww[cand[ii]]
    lam = 1e-10 * np.maximum(G.reshape(G.shape[0], -1).max(axis=1), 1e-30)
    G = G + lam[:, None, None] * np.eye(dim)
    sol = np.linalg.solve(G, b[..., None])[..., 0]
    cost[ii, jj] = np.maximum(c - np.einsum("ij,ij->i", b, sol), 0.0)
    return cost


def _solve_piece(
    G: np.ndarray,
    b: np.ndarray,
    phi_tot: np.ndarray,
    w_seg: float,
    ua: float,
    ub: float,
) -> tuple[np.ndarray, bool]:
    """Coefficients (in scaled coordinates) minimizing the squared bin
    residuals subject to exact segment mass and nonnegativity at the
    check-points.  Returns (coefficients, fell_back_to_constant)."""
    dim = b.size
    width = ub - ua
    const = np.zeros(dim)
    const[0] = w_seg / width
    if w_seg <= 0.0:
        return np.zeros(dim), False
    if dim == 1:
        return const, False
    nodes = _cheb_nodes(ua, ub)
    vand = np.vander(nodes, dim, increasing=True)
    # Equality-constrained solution first; the constraint set is feasible
    # (the constant piece satisfies it), so SLSQP only runs when the
    # unconstrained-shape solution dips negative.
    kkt = np.zeros((dim + 1, dim + 1))
    kkt[:dim, :dim] = 2.0 * G
    kkt[:dim, dim] = phi_tot
    kkt[dim, :dim] = phi_tot
    rhs = np.concatenate([2.0 * b, [w_seg]])
    try:
        a_eq = np.linalg.solve(kkt, rhs)[:dim]
    except np.linalg.LinAlgError:
        a_eq = None
    if a_eq is not None and float((vand @ a_eq).min()) >= -1e-12:
        return a_eq, False

    def objective(a: np.ndarray) -> float:
        return float(a @ G @ a - 2.0 * b @ a)

    def gradient(a: np.ndarray) -> np.ndarray:
        return 2.0 * (G @ a - b)

    res = optimize.minimize(
        objective,
        const,
        jac=gradient,
        method="SLSQP",
        constraints=[
            {"type": "eq", "fun": lambda a: phi_tot @ a - w_seg, "jac": lambda a: phi_tot},
            {"type": "ineq", "fun": lambda a: vand @ a, "jac": lambda a: vand},
        ],
        options={"maxiter": 500, "ftol": 1e-16},
    )
    a_sol = res.x
    mass_ok = abs(float(phi_tot @ a_sol) - w_seg) <= 1e-9 * max(1.0, w_seg)
    nonneg_ok = float((vand @ a_sol).min()) >= -1e-10
    if mass_ok and nonneg_ok and objective(a_sol) <= objective(const) + 1e-15:
        return a_sol, False
    return const, True


def fit_piecewise(
    masses,
    partition: IntervalPartition,
    t: int,
    d: int,
    support: tuple[float, float],
    max_candidates: int = MAX_CUT_CANDIDATES,
) -> PiecewiseFitResult:
    """Fit a t-piece degree-d density to per-bin masses of a partition.

    Piece breakpoints are restricted to the partition boundaries (thinned
    to at most ``max_candidates`` cut positions when the partition is very
    fine).  ``support`` bounds the density; the partition's two unbounded
    end cells are clipped to it.  Pathological pieces fall back to the
    always-feasible constant density and flag the result instead of
    failing.
    """
    if t < 1:
        raise DomainError("t must be at least 1")
    if not 0 <= d <= MAX_DEGREE:
        raise DomainError(f"d must lie in 0..{MAX_DEGREE}")
    if partition.ell < 2 * t * d:
        raise UsageError(f"partition has {partition.ell} bins, need at least 2*t*d={2*t*d}")
    lo, hi = float(support[0]), float(support[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise UsageError("support must be a finite nonempty interval")
    w = np.asarray(masses, dtype=float)
    if w.shape != (partition.ell,):
        raise UsageError("masses must match the partition size")
    if np.any(w < -1e-12):
        raise UsageError("masses must be nonnegative")
    if abs(float(w.sum()) - 1.0) > _MASS_TOL:
        raise UsageError("masses must sum to 1")
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    bnd = list(partition.boundaries)
    if bnd and (bnd[0] < lo or bnd[-1] > hi):
        raise UsageError("support must contain all partition boundaries")
    edges_x, w_m = _merge_cells([lo, *bnd, hi], w)
    scale = 2.0 / (hi - lo)
    shift = -(hi + lo) / (hi - lo)
    ue = scale * edges_x + shift  # affine map of the support onto [-1, 1]
    ncells = w_m.size
    dim = d + 1

    # Prefix sums of the per-cell Gram pieces, for O(1) segment costs.
    powers = np.arange(1, dim + 1)
    cell_phi = (ue[1:, None] ** powers - ue[:-1, None] ** powers) / powers
    pg = np.zeros((ncells + 1, dim, dim))
    pg[1:] = np.cumsum(cell_phi[:, :, None] * cell_phi[:, None, :], axis=0)
    pb = np.zeros((ncells + 1, dim))
    pb[1:] = np.cumsum(cell_phi * w_m[:, None], axis=0)
    pww = np.zeros(ncells + 1)
    pww[1:] = np.cumsum(w_m * w_m)

    if ncells + 1 > max_candidates:
        cand = np.unique(np.round(np.linspace(0, ncells, max_candidates)).astype(int))
    else:
        cand = np.arange(ncells + 1)
    cost = _segment_cost_matrix(cand, pg, pb, pww)

    t_eff = min(t, ncells)
    nc = cand.size
    best = np.full((t_eff + 1, nc), np.inf)
    parent = np.zeros((t_eff + 1, nc), dtype=int)
    best[0, 0] = 0.0
    for r in range(1, t_eff + 1):
        for j in range(1, nc):
            options = best[r - 1, :j] + cost[:j, j]
            i = int(np.argmin(options))
            best[r, j] = options[i]
            parent[r, j] = i
    r_best = 1 + int(np.argmin(best[1:, nc - 1]))
    cuts = [nc - 1]
    r = r_best
    while r > 0:
        cuts.append(int(parent[r, cuts[-1]]))
        r -= 1
    cuts = [cand[i] for i in reversed(cuts)]

    pieces_x: list[np.ndarray] = []
    bp_x: list[float] = [float(edges_x[cuts[0]])]
    best_effort = False
    for a_cell, b_cell in zip(cuts, cuts[1:]):
        G = pg[b_cell] - pg[a_cell]
        b_vec = pb[b_cell] - pb[a_cell]
        phi_tot = cell_phi[a_cell:b_cell].sum(axis=0)
        w_seg = float(w_m[a_cell:b_cell].sum())
        ua, ub = float(ue[a_cell]), float(ue[b_cell])
        coef_u, fell_back = _solve_piece(G, b_vec, phi_tot, w_seg, ua, ub)
        best_effort = best_effort or fell_back
        # back to x coordinates: density transforms with the Jacobian
        poly_x = Polynomial(coef_u)(Polynomial([shift, scale]))
        coef_x = np.zeros(dim)
        coef_x[: poly_x.coef.size] = poly_x.coef
        pieces_x.append(coef_x * scale)
        bp_x.append(float(edges_x[b_cell]))

    total = sum(
        _poly_integral(c, a, b) for c, a, b in zip(pieces_x, bp_x, bp_x[1:])
    )
    if total > 0 and abs(total - 1.0) > 1e-12:
        pieces_x = [c / total for c in pieces_x]
    density = PiecewisePolynomial(tuple(bp_x), tuple(tuple(c) for c in pieces_x))

    fk_family_k = max(1, 2 * t * d)
    fitted = np.clip(density.bin_masses(partition), 0.0, None)
    fitted = fitted / fitted.sum()
    achieved = fk_distance(fitted, w, fk_family_k)
    return PiecewiseFitResult(density, float(achieved), fk_family_k, best_effort)


def yatracos_select(candidates, reference, k: int) -> int:
    """Pick the candidate whose worst witness-set discrepancy to the
    reference is smallest.

    Witness sets are the best k-interval-union witnesses of all candidate
    differences; because each witness attains the pairwise distance
    exactly, the winner's distance to the reference is at most three times
    the best candidate's.  Ties go to the lowest index.
    """
    cands = [np.asarray(c, dtype=float) for c in candidates]
    if not cands:
        raise UsageError("need at least one candidate")
    ref = np.asarray(reference, dtype=float)
    if any(c.shape != ref.shape for c in cands):
        raise UsageError("candidates and reference must share one domain")
    if len(cands) == 1:
        return 0
    witnesses = []
    for i in range(len(cands)):
        for j in range(i + 1, len(cands)):
            _, w = best_k_interval_union(cands[i] - cands[j], k)
            if w.members:
                witnesses.append(w.indices0())
    if not witnesses:
        return 0
    scores = []
    for c in cands:
        scores.append(max(abs(float(c[idx].sum() - ref[idx].sum())) for idx in witnesses))
    return int(np.argmin(scores))


def evaluate_density(fit: PiecewisePolynomial, target) -> float:
    """Total-variation distance between a fitted density and an analytic
    target, by adaptive quadrature split at both densities' breakpoints."""
    t_lo, t_hi = target.support()
    lo = min(fit.support[0], t_lo)
    hi = max(fit.support[1], t_hi)
    pts = {lo, hi}
    pts.update(p for p in fit.breakpoints if lo <= p <= hi)
    pts.update(p for p in target.breakpoints() if lo <= p <= hi)
    grid = sorted(pts)
    total = 0.0
    for a, b in zip(grid, grid[1:]):
        val, _ = integrate.quad(
            lambda x: abs(float(fit.pdf(x)[0]) - float(target.pdf(np.asarray([x]))[0])),
            a,
            b,
            epsabs=1e-9,
            limit=200,
        )
        total += val
    return 0.5 * total
