"""Command-line entry point: scoring, selection, baselines, verification.

Exit codes: 0 success, 2 usage error, 3 bundle error, 4 unknown id,
5 verification invariant violated.  All randomness flows from --seed
through PCG64 (per-trial streams via SeedSequence spawn keys), so any
command rerun with the same flags produces byte-identical output files.
Every output embeds a manifest of the command, resolved flags, seed,
bundle path, and tool version; wall-clock duration goes to stderr only,
to keep outputs reproducible.  LMS3_THREADS caps worker threads for the
verification runs (default 1).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict

from . import __version__, baselines, scoring, selection
from .bundle import BundleError, load_bundle
from .theory import montecarlo

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUNDLE = 3
EXIT_LOOKUP = 4
EXIT_VIOLATION = 5


class LookupError_(Exception):
    """An id named on the command line does not exist in the bundle."""


class UsageError(Exception):
    """Flag combination is invalid beyond what argparse can express."""


def _threads() -> int:
    raw = os.environ.get("LMS3_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _manifest(command: str, args: argparse.Namespace, skip=("out", "func", "command")) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return {
        "command": command,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "bundle": getattr(args, "bundle", None),
        "version": __version__,
    }


def _write_text(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)


def _load(args):
    try:
        return load_bundle(args.bundle)
    except FileNotFoundError as exc:
        raise BundleError(str(exc)) from exc


def _find_test(tests, test_id: str):
    for t in tests:
        if t.id == test_id:
            return t
    raise LookupError_(f"unknown test id {test_id!r}")


def _scored_dict(s: scoring.ScoredDemonstration) -> dict:
    return {"id": s.id, "sim": s.sim, "stab": s.stab, "score": s.score,
            "sim_rank_fraction": s.sim_rank_fraction}


def _selection_dict(test_id: str, res: selection.SelectionResult, manifest: dict) -> dict:
    return {
        "test_id": test_id,
        "zero_shot": res.zero_shot,
        "chosen": [_scored_dict(s) for s in res.chosen],
        "rejected": [asdict(r) for r in res.rejected],
        "pool_size": res.pool_size,
        "run": manifest,
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_score(args) -> int:
    bundle, pool, tests = _load(args)
    test = _find_test(tests, args.test_id)
    cfg = scoring.ScoreConfig(variant=args.variant, lambda1=args.lambda1)
    scored = scoring.score_pool(bundle, pool, test, cfg)
    payload = {
        "test_id": test.id,
        "scores": [_scored_dict(s) for s in scored],
        "run": _manifest("score", args),
    }
    _write_text(args.out, json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def _select_one(bundle, pool, test, args, manifest):
    cfg = selection.SelectionConfig(k=args.k, lambda_=args.lambda_,
                                    polarity=args.polarity)
    if len(pool) == 0:
        return _selection_dict(test.id, selection.select_lms3([], cfg), manifest)
    scored = scoring.score_pool(
        bundle, pool, test,
        scoring.ScoreConfig(variant=args.variant, lambda1=args.lambda1))
    return _selection_dict(test.id, selection.select_lms3(scored, cfg), manifest)


def cmd_select(args) -> int:
    bundle, pool, tests = _load(args)
    manifest = _manifest("select", args)
    if args.all:
        lines = [json.dumps(_select_one(bundle, pool, t, args, manifest))
                 for t in tests]
        _write_text(args.out, "".join(line + "\n" for line in lines))
    else:
        if args.test_id is None:
            raise UsageError("provide --test-id or --all")
        test = _find_test(tests, args.test_id)
        payload = _select_one(bundle, pool, test, args, manifest)
        _write_text(args.out, json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_baseline(args) -> int:
    bundle, pool, tests = _load(args)
    if args.k > len(pool):
        raise UsageError(f"k={args.k} exceeds pool size {len(pool)}")
    manifest = _manifest("baseline", args)

    def run_one(test) -> dict:
        if args.method == "random":
            ids = baselines.select_random(pool, args.k, args.seed)
            chosen = [{"id": i, "sim": None, "stab": None, "score": None,
                       "sim_rank_fraction": None} for i in ids]
        elif args.method == "tfidf":
            sel = baselines.select_tfidf(pool, test.problem, args.k)
            chosen = [{"id": i, "sim": None, "stab": None, "score": s,
                       "sim_rank_fraction": None}
                      for i, s in zip(sel.ids, sel.scores)]
        else:
            sel = baselines.select_bm25(pool, test.problem, args.k,
                                        baselines.Bm25Params(k1=args.k1, b=args.b))
            chosen = [{"id": i, "sim": None, "stab": None, "score": s,
                       "sim_rank_fraction": None}
                      for i, s in zip(sel.ids, sel.scores)]
        return {"test_id": test.id, "zero_shot": False, "chosen": chosen,
                "rejected": [], "pool_size": len(pool), "run": manifest}

    if args.all:
        lines = [json.dumps(run_one(t)) for t in tests]
        _write_text(args.out, "".join(line + "\n" for line in lines))
    else:
        if args.test_id is None:
            raise UsageError("provide --test-id or --all")
        test = _find_test(tests, args.test_id)
        _write_text(args.out, json.dumps(run_one(test), indent=2) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    threads = _threads()
    common = dict(trials=args.trials, d=args.d, d_prime=args.dprime,
                  pretrain_size=args.dpre, seed=args.seed, ridge=args.ridge,
                  threads=threads)
    if args.check == "theorem1":
        report = montecarlo.run_theorem_trials(k=1, **common)
        bad = report["aggregate"]["taylor_violations"] > 0
    elif args.check == "theorem2":
        report = montecarlo.run_theorem_trials(k=args.k, **common)
        agg = report["aggregate"]
        bad = (agg["taylor_violations"] > 0
               or agg.get("additivity_violations", 0) > 0)
    elif args.check == "bounds":
        report = montecarlo.run_bound_trials(**common)
        bad = report["aggregate"]["chain_violations"] > 0
    else:
        report = montecarlo.run_influence_trials(**common)
        bad = report["aggregate"]["tolerance_violations"] > 0

    report["run"] = _manifest(f"verify {args.check}", args)
    _write_text(args.out, json.dumps(report, indent=2) + "\n")
    print(json.dumps(report["aggregate"]), file=sys.stderr)
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_report(args) -> int:
    bundle, pool, tests = _load(args)
    if len(tests) < 1:
        raise UsageError("bundle has no test items")
    if len(pool) < 2:
        raise UsageError("score distribution needs a pool of at least 2")
    cfg = scoring.ScoreConfig(variant=args.variant, lambda1=args.lambda1)
    rows = []
    for test in tests:
        scored = scoring.score_pool(bundle, pool, test, cfg)
        raw = [s.score for s in scored]
        z = scoring.zscore_normalize(raw)
        mean = sum(raw) / len(raw)
        var = sum((x - mean) ** 2 for x in raw) / (len(raw) - 1)
        for s, zv in zip(scored, z):
            rows.append((test.id, s.id, repr(s.score), repr(float(zv)),
                         repr(mean), repr(var)))
    out = _CsvText()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["test_id", "demo_id", "score", "zscore", "score_mean", "score_var"])
    writer.writerows(rows)
    _write_text(args.out, out.text())
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        lambdas = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --values list: {exc}") from exc
    if not lambdas or not all(0.0 < v <= 1.0 for v in lambdas):
        raise UsageError("--values must be a comma list of numbers in (0, 1]")

    bundle, pool, tests = _load(args)
    if not tests:
        raise UsageError("bundle has no test items")
    cfg = scoring.ScoreConfig(variant=args.variant, lambda1=args.lambda1)
    scored_per_test = [scoring.score_pool(bundle, pool, t, cfg) for t in tests]
    rows = selection.sweep_lambda(scored_per_test, lambdas, args.k,
                                  polarity=args.polarity)
    out = _CsvText()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["lambda", "mean_chosen", "zero_shot_rate"])
    for row in rows:
        writer.writerow([repr(row.lambda_), repr(row.mean_chosen),
                         repr(row.zero_shot_rate)])
    _write_text(args.out, out.text())
    return EXIT_OK


class _CsvText:
    """Minimal csv.writer sink collecting text in memory."""

    def __init__(self):
        self._chunks = []

    def write(self, chunk: str):
        self._chunks.append(chunk)

    def text(self) -> str:
        return "".join(self._chunks)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lms3", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_bundle(p):
        p.add_argument("--bundle", required=True, help="bundle directory")

    def add_score_flags(p):
        p.add_argument("--variant", choices=scoring.VARIANTS,
                       default=scoring.VARIANT_PRODUCT)
        p.add_argument("--lambda1", type=float, default=1.0,
                       help="stab weight for the sum variant")

    p = sub.add_parser("score", help="score every demonstration for one test")
    add_bundle(p)
    p.add_argument("--test-id", required=True)
    add_score_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="pick demonstrations with the rejection gate")
    add_bundle(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--test-id")
    group.add_argument("--all", action="store_true",
                       help="emit one JSONL line per test")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--lambda", dest="lambda_", type=float, default=1.0,
                   help="rejection threshold as a pool fraction in (0,1]")
    p.add_argument("--polarity", choices=selection.POLARITIES,
                   default=selection.POLARITY_MIN,
                   help="whether smaller or larger scores win")
    add_score_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("baseline", help="random / tfidf / bm25 reference selectors")
    add_bundle(p)
    p.add_argument("--method", choices=("random", "tfidf", "bm25"), required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--test-id")
    group.add_argument("--all", action="store_true")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k1", type=float, default=1.5, help="bm25 k1")
    p.add_argument("--b", type=float, default=0.75, help="bm25 b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("verify", help="Monte-Carlo verification harnesses")
    p.add_argument("check", choices=("theorem1", "theorem2", "bounds", "influence"))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--dprime", type=int, default=4)
    p.add_argument("--dpre", type=int, default=256,
                   help="number of pretraining points")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--k", type=int, default=3, help="shots for theorem2")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="emit analysis tables")
    p.add_argument("table", choices=("score-dist",))
    add_bundle(p)
    add_score_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="selection statistics over a threshold grid")
    p.add_argument("axis", choices=("lambda",))
    p.add_argument("--values", required=True,
                   help="comma-separated thresholds in (0,1]")
    add_bundle(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--polarity", choices=selection.POLARITIES,
                   default=selection.POLARITY_MIN)
    add_score_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.monotonic()
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BundleError as exc:
        print(f"bundle error: {exc}", file=sys.stderr)
        return EXIT_BUNDLE
    except LookupError_ as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOOKUP
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        print(f"[lms3] {time.monotonic() - start:.3f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
