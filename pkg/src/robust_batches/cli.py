"""Command-line surface: simulate, clean, estimate, classify, eval, selftest.

Every command takes --seed and is deterministic given it.  Reports embed
the resolved configuration; execution-only settings (--threads, --format)
are excluded so reruns stay byte-identical whatever the thread count.
Exit codes: 0 success, 2 usage or file-format error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .classify import LabeledCollection, erm_k_intervals, risk, robust_classify
from .clean import clean_pipeline, guidance_batches
from .core import BatchCollection, CorruptionParams, DomainError, UsageError
from .corruption import STOP_FACTOR, TRIGGER_FACTOR, corruption_collection
from .detect import DETECTORS
from .distance import fk_distance, fk_distance_brute
from .estimate import fit_piecewise
from .io import FileFormatError, read_batches, read_json, write_batches, write_csv, write_json
from .partition import BinSubset, build_partition, choose_ell, discretize
from .simulate import ClassificationTarget, build_collection, metrics, parse_attack, parse_target


def _default_threads() -> int:
    env = os.environ.get("ROBUST_BATCHES_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"ROBUST_BATCHES_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="rng seed (all commands are deterministic given it)")
    p.add_argument("--out", type=str, default=None, help="report path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=int, default=None, help="worker threads (env ROBUST_BATCHES_THREADS)")


def _add_cleaning_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=float, required=True, help="adversarial batch fraction (<= 0.4)")
    p.add_argument("--detector", choices=DETECTORS, default="spectral")
    p.add_argument("--candidates", type=int, default=None, help="spectral candidate budget")
    p.add_argument("--trigger", type=float, default=TRIGGER_FACTOR, help="deletion trigger, multiples of kappa_g")
    p.add_argument("--stop", type=float, default=STOP_FACTOR, help="deletion stop, multiples of kappa_g")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-batches",
        description="Robust distribution estimation and classification from adversarial sample batches",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a contaminated collection")
    p.add_argument("--target", required=True, help="e.g. uniform:0,1 | gm:0.5N(0,1)+0.5N(3,0.5)")
    p.add_argument("--attack", default="none", help="e.g. mean_shift:1.0@0.45,0.55")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    _add_common(p)

    p = sub.add_parser("clean", help="partition, discretize, detect-and-delete")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--target", default=None, help="simulation-mode reference for fk scoring")
    p.add_argument("--retained", default=None, help="write surviving batches here (jsonl)")
    p.add_argument("--partition-out", default=None, help="write the partition here (json)")
    _add_cleaning_flags(p)
    _add_common(p)

    p = sub.add_parser("estimate", help="clean, then fit a piecewise-polynomial density")
    p.add_argument("--input", required=True)
    p.add_argument("--t", type=int, required=True, help="number of polynomial pieces")
    p.add_argument("--d", type=int, required=True, help="polynomial degree per piece")
    p.add_argument("--target", default=None)
    p.add_argument("--fit-out", default=None, help="write the fitted density here (json)")
    _add_cleaning_flags(p)
    _add_common(p)

    p = sub.add_parser("classify", help="clean labeled batches, then interval ERM")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--target", default=None)
    _add_cleaning_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="score a cleaning report against truth flags")
    p.add_argument("--input", required=True)
    p.add_argument("--report", required=True, help="report produced by the clean command")
    p.add_argument("--target", default=None)
    p.add_argument("--subset", default=None, help="comma-separated 1-based bins for a corruption report")
    _add_common(p)

    p = sub.add_parser("selftest", help="run the oracle-equivalence suites")
    _add_common(p)
    return parser


def _emit(report: dict, args) -> None:
    if args.out is None:
        from .io import canonical_json

        sys.stdout.write(canonical_json(report))
    elif args.format == "csv":
        write_csv(report, args.out)
    else:
        write_json(report, args.out)


def _config(args, keys) -> dict:
    return {k: getattr(args, k.replace("-", "_")) for k in keys}


def _cmd_simulate(args) -> int:
    target = parse_target(args.target)
    attack = parse_attack(args.attack)
    threads = args.threads or _default_threads()
    collection = build_collection(target, attack, args.m, args.n, args.beta, args.seed, threads)
    if args.out is None:
        raise UsageError("simulate requires --out for the batch file")
    write_batches(collection, args.out)
    return 0


def _clean_config(args, extra=()) -> dict:
    keys = ["seed", "beta", "detector", "candidates", "trigger", "stop", "input", "out"]
    cfg = _config(args, keys + list(extra))
    cfg["command"] = args.command
    return cfg


def _cmd_clean(args) -> int:
    collection = read_batches(args.input)
    if not isinstance(collection, BatchCollection):
        raise UsageError("clean expects an unlabeled batch file")
    target = parse_target(args.target) if args.target else None
    rng = np.random.Generator(np.random.PCG64(args.seed))
    result = clean_pipeline(
        collection,
        args.k,
        args.beta,
        rng,
        detector=args.detector,
        trigger_factor=args.trigger,
        stop_factor=args.stop,
        candidates_budget=args.candidates,
        reference=target,
    )
    report = {
        "config": _clean_config(args, extra=["k", "target", "retained"]),
        "cleaning": result.report.to_dict(),
        "guidance_batches": (
            guidance_batches(args.k, collection.n, args.beta) if args.beta > 0 else None
        ),
    }
    if args.retained:
        write_batches(result.retained, args.retained)
    if args.partition_out:
        write_json(result.partition.to_dict(), args.partition_out)
    _emit(report, args)
    return 0


def _cmd_estimate(args) -> int:
    collection = read_batches(args.input)
    if not isinstance(collection, BatchCollection):
        raise UsageError("estimate expects an unlabeled batch file")
    target = parse_target(args.target) if args.target else None
    rng = np.random.Generator(np.random.PCG64(args.seed))
    k_clean = max(1, 2 * args.t * args.d)
    result = clean_pipeline(
        collection,
        k_clean,
        args.beta,
        rng,
        detector=args.detector,
        trigger_factor=args.trigger,
        stop_factor=args.stop,
        candidates_budget=args.candidates,
        reference=target,
    )
    pooled = result.retained.pooled_samples()
    support = (float(pooled[0]), float(pooled[-1]))
    fit = fit_piecewise(result.cleaned.pooled(), result.partition, args.t, args.d, support)
    report = {
        "config": _clean_config(args, extra=["t", "d", "target"]),
        "cleaning": result.report.to_dict(),
        "fit": fit.to_dict(),
    }
    if target is not None:
        from .estimate import evaluate_density

        report["tv_to_target"] = float(evaluate_density(fit.density, target))
    if args.fit_out:
        write_json(fit.density.to_dict(), args.fit_out)
    _emit(report, args)
    return 0


def _cmd_classify(args) -> int:
    collection = read_batches(args.input)
    if not isinstance(collection, LabeledCollection):
        raise UsageError("classify expects a labeled batch file")
    target = parse_target(args.target) if args.target else None
    if target is not None and not isinstance(target, ClassificationTarget):
        raise UsageError("classify needs a labeled: target")
    rng = np.random.Generator(np.random.PCG64(args.seed))
    hypothesis, report = robust_classify(
        collection,
        args.k,
        args.beta,
        rng,
        detector=args.detector,
        trigger_factor=args.trigger,
        stop_factor=args.stop,
        candidates_budget=args.candidates,
        reference=target,
    )
    out = {
        "config": _clean_config(args, extra=["k", "target"]),
        "classification": report.to_dict(),
        "decision_region": [
            {"lo": iv.lo, "hi": iv.hi}
            for iv in hypothesis.decision_region.intervals
        ],
    }
    # interval endpoints may be infinite; JSON needs them spelled out
    for iv in out["decision_region"]:
        for key in ("lo", "hi"):
            if not np.isfinite(iv[key]):
                iv[key] = "-inf" if iv[key] < 0 else "inf"
    _emit(out, args)
    return 0


def _cmd_eval(args) -> int:
    collection = read_batches(args.input)
    report = read_json(args.report)
    cleaning = report.get("cleaning", report)
    retained_ids = cleaning["retained_ids"]
    k = int(report.get("config", {}).get("k", 1) or 1)
    beta = float(cleaning["beta"])
    target = parse_target(args.target) if args.target else None
    out: dict = {"config": {"command": "eval", "input": args.input, "report": args.report}}
    partition = None
    if isinstance(collection, BatchCollection):
        sizing_beta = beta if beta > 0 else 0.1
        ell = choose_ell(k, collection.n, sizing_beta, collection.m)
        partition = build_partition(collection.pooled_samples(), ell)
    if target is not None and collection.truth is not None:
        out["metrics"] = metrics(collection, retained_ids, target, k, partition)
    elif collection.truth is not None:
        good = collection.good_ids()
        out["metrics"] = {
            "retention_good": len(good & set(retained_ids)) / len(good) if good else None
        }
    if args.subset and partition is not None:
        members = frozenset(int(v) for v in args.subset.split(","))
        disc = discretize(collection, partition)
        params = CorruptionParams(beta if beta > 0 else 0.1, collection.n, collection.m)
        out["corruption"] = corruption_collection(disc, BinSubset(members), params).to_dict()
    _emit(out, args)
    return 0


def _selftest_fk(rng: np.random.Generator, rounds: int) -> bool:
    for _ in range(rounds):
        ell = int(rng.integers(1, 13))
        k = int(rng.integers(1, 4))
        p = rng.multinomial(64, np.full(ell, 1.0 / ell)) / 64.0
        q = rng.multinomial(64, np.full(ell, 1.0 / ell)) / 64.0
        if fk_distance(p, q, k) != fk_distance_brute(p, q, k):
            return False
    return True


def _selftest_erm(rng: np.random.Generator, rounds: int) -> bool:
    from .distance import iter_k_run_subsets

    for _ in range(rounds):
        s = int(rng.integers(2, 13))
        k = int(rng.integers(1, 3))
        x = np.sort(rng.random(s))
        y = rng.integers(0, 2, s)
        h = erm_k_intervals(x, y, k)
        dp_loss = risk(h, x, y)
        best = min(
            risk(_hyp_from_subset(sub, x), x, y) for sub in iter_k_run_subsets(s, k)
        )
        if dp_loss != best:
            return False
    return True


def _hyp_from_subset(sub, xs):
    from .classify import KIntervalHypothesis
    from .partition import Interval, IntervalUnion

    intervals = []
    for a, b in sub.runs():
        lo = -np.inf if a == 1 else 0.5 * (xs[a - 2] + xs[a - 1])
        hi = np.inf if b == len(xs) else 0.5 * (xs[b - 1] + xs[b])
        intervals.append(Interval(lo, hi))
    return KIntervalHypothesis(IntervalUnion(tuple(intervals)))


def _selftest_roundtrip(rng: np.random.Generator, rounds: int) -> bool:
    from .core import Batch, BatchCollection, empirical_prob
    from .partition import lift_subset

    for _ in range(rounds):
        n, m = 40, 6
        batches = tuple(Batch(i, rng.standard_normal(n)) for i in range(m))
        coll = BatchCollection(batches)
        part = build_partition(coll.pooled_samples(), 12)
        disc = discretize(coll, part)
        members = frozenset(
            int(j) + 1 for j in np.nonzero(rng.random(part.ell) < 0.5)[0]
        )
        subset = BinSubset(members)
        region = lift_subset(subset, part)
        for i in range(m):
            if empirical_prob(batches[i], region) != empirical_prob(disc.batch(i), subset):
                return False
    return True


def _cmd_selftest(args) -> int:
    rng = np.random.Generator(np.random.PCG64(args.seed))
    suites = [
        ("fk distance vs exhaustive oracle", lambda: _selftest_fk(rng, 200)),
        ("interval ERM vs exhaustive oracle", lambda: _selftest_erm(rng, 200)),
        ("discretize/lift round trip", lambda: _selftest_roundtrip(rng, 40)),
    ]
    failed = 0
    for name, fn in suites:
        start = time.perf_counter()
        ok = fn()
        took = time.perf_counter() - start
        print(f"{'PASS' if ok else 'FAIL'} {name} ({took:.1f}s)")
        failed += 0 if ok else 1
    return 0 if failed == 0 else 1


_COMMANDS = {
    "simulate": _cmd_simulate,
    "clean": _cmd_clean,
    "estimate": _cmd_estimate,
    "classify": _cmd_classify,
    "eval": _cmd_eval,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, DomainError, FileFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
