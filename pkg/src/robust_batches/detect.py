"""Finding bin subsets with high corruption score.

The exhaustive search is exact but exponential in the bin count, so it is
kept as an oracle for small domains.  The polynomial-time detector centers
the per-batch probability matrix at the column medians, takes the leading
eigenvector of the resulting covariance-like matrix by fixed-length power
iteration, and scores the subsets obtained by thresholding the eigenvector
at every distinct coordinate value (both signs), plus dyadic contiguous
windows (per-bin deviations can sit far below tau individually while their
contiguous aggregate clears it), plus all singletons.  Singleton inclusion
guarantees single-bin attacks are always found.
"""

from __future__ import annotations

import numpy as np

from .core import CorruptionParams, DiscretizedCollection, UsageError
from .corruption import STOP_FACTOR, TRIGGER_FACTOR, batch_deletion, median_prob
from .partition import EMPTY_SUBSET, BinSubset

_BRUTE_MAX_ELL = 20
_BRUTE_CHUNK = 2048
_POWER_ITERATIONS = 200
_POWER_SEED = 0x5EEDC0DE  # detection keeps its own rng so the pipeline seed is untouched
_DEFAULT_CANDIDATE_CAP = 4096  # threshold candidates; keeps huge partitions tractable


def _score_subsets(sub: DiscretizedCollection, masks: np.ndarray, tau: float) -> np.ndarray:
    """Total corruption score for each column-mask in ``masks`` (ell, nc)."""
    probs = sub.probs() @ masks
    med = np.median(probs, axis=0)
    dev = probs - med
    return np.where(np.abs(dev) <= tau, 0.0, dev * dev).sum(axis=0)


def max_corruption_subset_brute(
    sub: DiscretizedCollection, params: CorruptionParams
) -> tuple[BinSubset, float]:
    """Exact argmax of the corruption score over all 2^ell bin subsets.

    Ties go to the smallest bitmask, so an uncorrupted collection returns
    the empty subset.  Refused for ell > 20.
    """
    ell = sub.ell
    if ell > _BRUTE_MAX_ELL:
        raise UsageError(f"brute-force detection refused for ell > {_BRUTE_MAX_ELL}")
    best_score = 0.0
    best_mask = 0
    bit = np.arange(ell, dtype=np.uint32)
    for start in range(0, 1 << ell, _BRUTE_CHUNK):
        ints = np.arange(start, min(start + _BRUTE_CHUNK, 1 << ell), dtype=np.uint32)
        masks = ((ints[:, None] >> bit) & 1).astype(np.float64).T
        scores = _score_subsets(sub, masks, params.tau)
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score = float(scores[i])
            best_mask = int(ints[i])
    members = frozenset(int(i) + 1 for i in range(ell) if best_mask >> i & 1)
    return (BinSubset(members) if members else EMPTY_SUBSET), best_score


def _leading_eigvec(centered: np.ndarray) -> np.ndarray:
    """Leading eigenvector of centered.T @ centered by power iteration.

    When there are more bins than batches the iteration runs on the small
    m x m Gram matrix instead and maps back, which is the same vector.
    """
    rng = np.random.Generator(np.random.PCG64(_POWER_SEED))
    m, ell = centered.shape
    gram_side = centered @ centered.T if ell > m else centered.T @ centered
    v = rng.standard_normal(gram_side.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(_POWER_ITERATIONS):
        w = gram_side @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
    if ell > m:
        v = centered.T @ v
        norm = np.linalg.norm(v)
        if norm > 0.0:
            v = v / norm
    return v


def _threshold_candidates(v: np.ndarray, budget: int | None) -> list[np.ndarray]:
    """Index sets {i: v_i >= t} over every distinct threshold t, both signs."""
    cands: list[np.ndarray] = []
    for vec in (v, -v):
        order = np.argsort(-vec, kind="stable")
        sorted_vals = vec[order]
        cuts = np.nonzero(np.diff(sorted_vals))[0] + 1
        depths = list(cuts) + [vec.size]
        for depth in depths:
            cands.append(np.sort(order[:depth]))
    if budget is not None and len(cands) > budget:
        keep = np.unique(np.linspace(0, len(cands) - 1, budget).round().astype(int))
        cands = [cands[i] for i in keep]
    return cands


def _window_candidates(ell: int, budget: int) -> list[np.ndarray]:
    """Dyadic contiguous windows, longest first.

    Eigenvector thresholding can miss attacks whose per-bin deviations are
    individually far below tau but aggregate over a contiguous range;
    half-overlapping power-of-two windows cover every such range to within
    half its length.  A window's complement scores identically (deviations
    from the median are antisymmetric), so complements are not added.
    """
    out: list[np.ndarray] = []
    length = 1 << (ell - 1).bit_length()
    length = min(length, ell)
    while length >= 2 and len(out) < budget:
        stride = max(1, length // 2)
        starts = list(range(0, ell - length + 1, stride))
        if starts[-1] != ell - length:
            starts.append(ell - length)
        for a in starts:
            out.append(np.arange(a, a + length))
            if len(out) >= budget:
                break
        length //= 2
    return out


def max_corruption_subset_heuristic(
    sub: DiscretizedCollection,
    params: CorruptionParams,
    candidates_budget: int | None = None,
) -> tuple[BinSubset, float]:
    """Spectral stand-in for exhaustive detection, polynomial in m and ell.

    Candidates are eigenvector threshold sets (both signs), dyadic
    contiguous windows, and all singletons; ``candidates_budget`` caps the
    first two families (default 4096 each).  Singletons are evaluated by a
    direct per-column pass, so single-bin attacks are always found.
    """
    ell = sub.ell
    P = sub.probs()
    med = np.median(P, axis=0)
    centered = P - med
    v = _leading_eigvec(centered)
    budget = candidates_budget if candidates_budget is not None else _DEFAULT_CANDIDATE_CAP
    index_sets = _threshold_candidates(v, budget)
    index_sets.extend(_window_candidates(ell, budget))
    seen: set[bytes] = set()
    masks = []
    for idx in index_sets:
        mask = np.zeros(ell, dtype=np.float64)
        mask[idx] = 1.0
        key = mask.tobytes()
        if key not in seen:
            seen.add(key)
            masks.append(mask)
    scores = _score_subsets(sub, np.stack(masks, axis=1), params.tau)
    best_score = 0.0
    best_mask: np.ndarray | None = None
    best_bits = 0
    for mask, score in zip(masks, scores):
        if score > best_score:
            best_score = float(score)
            best_mask = mask
            best_bits = _bitmask(mask)
        elif score == best_score and best_mask is not None and _bitmask(mask) < best_bits:
            best_mask = mask
            best_bits = _bitmask(mask)
    # singleton scores, one column each
    single = np.where(np.abs(centered) <= params.tau, 0.0, centered * centered).sum(axis=0)
    j_best = int(np.argmax(single))
    if single[j_best] > best_score or (
        single[j_best] == best_score and best_mask is not None and (1 << j_best) < best_bits
    ):
        best_score = float(single[j_best])
        best_mask = np.zeros(ell)
        best_mask[j_best] = 1.0
    if best_mask is None or best_score <= 0.0:
        return EMPTY_SUBSET, 0.0
    members = frozenset(int(i) + 1 for i in np.nonzero(best_mask)[0])
    return BinSubset(members), best_score


def _bitmask(mask: np.ndarray) -> int:
    out = 0
    for i in np.nonzero(mask)[0]:
        out |= 1 << int(i)
    return out


DETECTORS = ("spectral", "brute")


def clean_discrete(
    sub: DiscretizedCollection,
    params: CorruptionParams,
    rng: np.random.Generator,
    detector: str = "spectral",
    trigger_factor: float = TRIGGER_FACTOR,
    stop_factor: float = STOP_FACTOR,
    candidates_budget: int | None = None,
) -> tuple[DiscretizedCollection, int]:
    """Detect-and-delete loop over the discretized domain.

    Each round finds the highest-corruption subset the detector can see;
    if its score reaches trigger_factor*kappa_g, the cross-batch median is
    recomputed on the surviving sub-collection and batch deletion runs down
    to stop_factor*kappa_g.  Returns the survivors and the round count.
    """
    if detector not in DETECTORS:
        raise UsageError(f"unknown detector {detector!r}; expected one of {DETECTORS}")
    if not 0.0 < stop_factor <= trigger_factor:
        raise UsageError("need 0 < stop_factor <= trigger_factor")
    rounds = 0
    while True:
        if detector == "brute":
            subset, score = max_corruption_subset_brute(sub, params)
        else:
            subset, score = max_corruption_subset_heuristic(sub, params, candidates_budget)
        if score < trigger_factor * params.kappa_g or not subset.members:
            break
        med = median_prob(sub, subset)
        sub = batch_deletion(sub, subset, med, params, rng, stop_factor)
        rounds += 1
    return sub, rounds
