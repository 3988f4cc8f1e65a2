"""Command-line entry point: ``ringtrace {generate,deduce,simulate,metrics,fit}``.

Exit status is 0 on success, 2 for usage errors and 1 for data errors.  Errors
are reported on stderr as a single line ``error: <Kind>: <message>``.  Every
file written gets a ``<file>.manifest.json`` sidecar recording the command,
its arguments, the seed, input digests and wall time.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from pathlib import Path

from . import __version__
from .chaingen import generate_chain_with_stats, load_config, read_chain, read_ground_truth, write_chain
from .deduction import closure_deduce, fixpoint_deduce, score_against_truth
from .errors import RingtraceError
from .montecarlo import SimConfig, default_workers, gamma_fit_report, simulate_policy, spend_records
from .sampling import parse_policy
from .temporal import bge_min, ge_min, table4_csv


class UsageError(Exception):
    pass


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(output: Path, args: argparse.Namespace, inputs: list, started: float) -> None:
    params = {k: (v if v is None or isinstance(v, (bool, int, float, list)) else str(v))
              for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "command": args.command,
        "arguments": params,
        "config_hash": hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest(),
        "seed": params.get("seed"),
        "tool_version": __version__,
        "inputs": {str(p): _digest(p) for p in inputs},
        "output_digest": _digest(output),
        "wall_time_s": round(time.perf_counter() - started, 6),
    }
    Path(f"{output}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _emit(text: str, out: Path | None, args, inputs, started) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", newline="") as fh:
        fh.write(text)
    _write_manifest(out, args, inputs, started)


# argument types --------------------------------------------------------------

def _mixin_range(text: str) -> list[int]:
    lo, sep, hi = text.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}") from None
    if a < 0 or b < a:
        raise argparse.ArgumentTypeError(f"bad mixin range {text!r}")
    return list(range(a, b + 1))


def _policy(text: str):
    try:
        return parse_policy(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


# commands --------------------------------------------------------------------

def cmd_generate(args, started) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    chain, truth, stats = generate_chain_with_stats(config, strict=args.strict)
    chain_file, truth_file = write_chain(chain, truth, args.out)
    for f in (chain_file, truth_file):
        _write_manifest(f, args, [args.config], started)
    print(json.dumps({"blocks": chain.height + 1, "inputs": stats.inputs,
                      "deferred": stats.deferred, "dropped": stats.dropped,
                      "chain": str(chain_file), "truth": str(truth_file)}, sort_keys=True))
    return 0


def cmd_deduce(args, started) -> int:
    chain = read_chain(args.chain)
    if args.closure:
        result = closure_deduce(chain, args.component_limit)
    else:
        result = fixpoint_deduce(chain)
    result.write_csv(chain, args.out)
    inputs = [args.chain]
    if args.ground_truth:
        inputs.append(args.ground_truth)
    _write_manifest(args.out, args, inputs, started)
    summary = {"inputs": chain.num_inputs(), "deduced": len(result.deduced),
               "components_skipped": result.stats.components_skipped}
    if args.ground_truth:
        truth = read_ground_truth(args.ground_truth)
        truth.validate(chain)
        score = score_against_truth(result, chain, truth)
        summary.update(precision=score.precision, recall=score.recall, correct=score.correct)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["num_mixins", "inputs", "deduced", "deducible_fraction"])
        for m, (total, hit) in score.by_mixins.items():
            writer.writerow([m, total, hit, f"{hit / total:.6f}"])
        if args.breakdown:
            _emit(buf.getvalue(), args.breakdown, args, inputs, started)
        else:
            summary["breakdown"] = {str(m): {"inputs": t, "deduced": d} for m, (t, d) in score.by_mixins.items()}
    print(json.dumps(summary, sort_keys=True))
    return 0


def _read_records(path) -> list[tuple[float, int]]:
    records = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or (lineno == 1 and not _is_number(row[0])):
                continue
            try:
                records.append((float(row[0]), int(row[1]) if len(row) > 1 else 0))
            except ValueError:
                raise RingtraceError(f"{path}: line {lineno}: expected spendtime_s[,denomination]") from None
    return records


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def cmd_simulate(args, started) -> int:
    chain = read_chain(args.chain)
    inputs = [args.chain]
    if args.records:
        records = _read_records(args.records)
        inputs.append(args.records)
    else:
        truth = read_ground_truth(args.ground_truth)
        truth.validate(chain)
        records = spend_records(chain, truth)
        inputs.append(args.ground_truth)
    if not records:
        raise RingtraceError("no spend records available")
    for m in args.mixins:
        if not args.policy.ring_size_ok(m):
            raise UsageError(f"policy {args.policy} cannot build rings with {m} mixins")
    if args.height is not None and not 0 <= args.height <= chain.height:
        raise UsageError(f"--height must be within 0..{chain.height}")
    cfg = SimConfig(chain=chain, records=records, policy=args.policy, mixins=args.mixins,
                    trials=args.trials, fixed_height=args.height, seed=args.seed,
                    density_samples=args.density_samples, workers=args.workers)
    report = simulate_policy(cfg)
    _emit(report.to_csv(), args.out, args, inputs, started)
    return 0


def cmd_metrics(args, started) -> int:
    if args.table4:
        text = table4_csv()
    elif args.ge is not None:
        m, eps = args.ge
        text = f"m,epsilon,ge_min\n{int(m)},{eps:g},{ge_min(int(m), eps):.12g}\n"
    else:
        s, n, eps = args.bge
        text = f"bin_size,num_bins,epsilon,bge_min\n{int(s)},{int(n)},{eps:g},{bge_min(int(s), int(n), eps):.12g}\n"
    _emit(text, args.out, args, [], started)
    return 0


def cmd_fit(args, started) -> int:
    times = [t for t, _ in _read_records(args.spendtimes)]
    rep = gamma_fit_report(times)
    text = f"shape,rate,ks,n\n{rep['shape']:.6f},{rep['rate']:.6f},{rep['ks']:.6f},{rep['n']}\n"
    _emit(text, args.out, args, [args.spendtimes], started)
    return 0


def _ge_args(values):
    m, eps = values
    if int(m) != m or m < 0:
        raise UsageError("--ge: m must be a non-negative integer")
    if not 0 <= eps <= 1:
        raise UsageError("--ge: epsilon must be within [0, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ringtrace", allow_abbrev=False,
                                     description="Traceability analysis for ring-signature chains.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", allow_abbrev=False, help="generate a synthetic chain with ground truth")
    p.add_argument("config", type=Path, help="JSON generator config")
    p.add_argument("--out", type=Path, required=True, metavar="PREFIX",
                   help="writes PREFIX.chain.jsonl and PREFIX.truth.jsonl")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--strict", action="store_true", help="fail instead of deferring unservable spends")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("deduce", allow_abbrev=False, help="run the chain-reaction deduction")
    p.add_argument("chain", type=Path, help="chain JSONL file")
    p.add_argument("--out", type=Path, required=True, help="per-input report CSV")
    p.add_argument("--closure", action="store_true", help="also run the exact closure analysis")
    p.add_argument("--component-limit", type=_positive_int, default=10_000,
                   help="skip closure components with more inputs than this (default 10000)")
    p.add_argument("--ground-truth", type=Path, default=None, help="truth JSONL for precision/recall")
    p.add_argument("--breakdown", type=Path, default=None,
                   help="CSV of deducible fraction by mixin count (needs --ground-truth)")
    p.set_defaults(func=cmd_deduce)

    p = sub.add_parser("simulate", allow_abbrev=False, help="Monte Carlo evaluation of a mixin policy")
    p.add_argument("chain", type=Path, help="chain JSONL file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ground-truth", type=Path, help="truth JSONL supplying spend records")
    src.add_argument("--records", type=Path, help="CSV of spendtime_s,denomination records")
    p.add_argument("--policy", type=_policy, required=True,
                   help="pre_0_9 | v0_9 | v0_10_1[:w,r] | v0_11_0[:w,r] | gamma[:shape,rate] (alias gamma_fit) | binned[:size[,inner]]")
    p.add_argument("--mixins", type=_mixin_range, default=list(range(1, 11)), help="N or A..B (default 1..10)")
    p.add_argument("--trials", type=_positive_int, default=10_000, help="trials per mixin count")
    p.add_argument("--height", type=int, default=None, help="fixed block height (default: chain tip)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density-samples", type=_positive_int, default=20_000,
                   help="mixin ages used to estimate the policy density")
    p.add_argument("--workers", type=_positive_int, default=default_workers(),
                   help="worker processes (default from RINGTRACE_THREADS, else 1)")
    p.add_argument("--out", type=Path, default=None, help="report CSV (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", allow_abbrev=False, help="closed-form untraceability bounds")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--table4", action="store_true", help="full min-untraceability table as CSV")
    g.add_argument("--ge", type=float, nargs=2, metavar=("M", "EPS"), help="worst-case guessing entropy")
    g.add_argument("--bge", type=float, nargs=3, metavar=("S", "N", "EPS"),
                   help="worst-case binned guessing entropy")
    p.add_argument("--out", type=Path, default=None, help="output CSV (default stdout)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fit", allow_abbrev=False, help="fit a gamma model to log spend times")
    p.add_argument("spendtimes", type=Path, help="CSV whose first column is spend time in seconds")
    p.add_argument("--out", type=Path, default=None, help="output CSV (default stdout)")
    p.set_defaults(func=cmd_fit)
    return parser


def _check_usage(args) -> None:
    if args.command == "metrics":
        if args.ge is not None:
            _ge_args(args.ge)
        if args.bge is not None:
            s, n, eps = args.bge
            if int(s) != s or int(n) != n or s < 1 or n < 1 or not 0 <= eps <= 1:
                raise UsageError("--bge: S and N must be positive integers and EPS within [0, 1]")
    if args.command == "deduce" and args.breakdown and not args.ground_truth:
        raise UsageError("--breakdown requires --ground-truth")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        _check_usage(args)
        return args.func(args, started)
    except UsageError as exc:
        parser.error(str(exc))
    except (RingtraceError, OSError, ValueError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
