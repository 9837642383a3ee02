"""Command line front end.

Five subcommands: `run` drives a campaign, `subjects` lists what can
be fuzzed, `replay` scores one input file, `smt` prints the SMT-LIB
query for an input's path condition, and `compare` folds campaign
stats files into a table plus plot-ready CSV.

Exit codes: 0 on success, 1 on runtime failures (VM faults, missing
or malformed files, crashed workers), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .concolic import concolic_execute
from .coordinator import MODES, CampaignConfig, run_campaign
from .fuzzer import classify_coverage
from .solver import Domain, to_smtlib
from .subjects import SubjectError, get_subject, list_subjects
from .trie import HEURISTIC_HIGHER, HEURISTIC_LOWER
from .vm import COST_MODELS, STATUS_OK, execute

_MODE_ORDER = {mode: i for i, mode in enumerate(MODES)}


def _parse_value_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(
            f"expected LO:HI, got {text!r}")
    try:
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected integer bounds, got {text!r}") from None


def _add_subject_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--subject", required=True,
                     help="subject name; see `wcfuzz subjects`")
    sub.add_argument("--n", type=int, default=None,
                     help="problem size override")
    sub.add_argument("--value-range", type=_parse_value_range, default=None,
                     metavar="LO:HI", help="input value domain override")
    sub.add_argument("--cost-model", choices=COST_MODELS, default=None,
                     help="default: the subject's own cost model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wcfuzz",
        description="worst-case cost fuzzing with concolic assistance")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="run one campaign")
    _add_subject_flags(run)
    run.add_argument("--mode", choices=MODES, default="badger")
    run.add_argument("--budget-seconds", type=float, default=60.0)
    run.add_argument("--rng-seed", type=int, default=0)
    run.add_argument("--heuristic", default=HEURISTIC_LOWER,
                     choices=(HEURISTIC_HIGHER, HEURISTIC_LOWER))
    run.add_argument("--bse-depth", type=int, default=1)
    run.add_argument("--sync-dir", default="campaign_out")
    run.add_argument("--import-interval", type=int, default=10)
    run.add_argument("--stop-at-cost", type=int, default=None)
    run.add_argument("--fuzzer-iterations", type=int, default=None,
                     help="iteration cap replacing the wall clock")
    run.add_argument("--symexe-iterations", type=int, default=None)
    run.set_defaults(func=cmd_run)

    subs = subparsers.add_parser("subjects", help="list shipped subjects")
    subs.set_defaults(func=cmd_subjects)

    replay = subparsers.add_parser("replay", help="score one input file")
    _add_subject_flags(replay)
    replay.add_argument("input_file", help="raw input bytes to replay")
    replay.set_defaults(func=cmd_replay)

    smt = subparsers.add_parser(
        "smt", help="print the SMT-LIB query for an input's path")
    _add_subject_flags(smt)
    smt.add_argument("--input", default=None,
                     help="input file; default: the subject's seed")
    smt.add_argument("--maximize", action="store_true",
                     help="append the symbolic cost objective "
                          "(user_defined cost model only)")
    smt.set_defaults(func=cmd_smt)

    compare = subparsers.add_parser(
        "compare", help="tabulate campaign stats files")
    compare.add_argument("stats_files", nargs="+",
                         help="stats_merged.csv files from campaign runs")
    compare.add_argument("--csv", default=None, metavar="PATH",
                         help="write curve data here instead of stdout")
    compare.set_defaults(func=cmd_compare)
    return parser


def _subject_from_args(args):
    return get_subject(args.subject, n=args.n, value_range=args.value_range,
                       seed=getattr(args, "rng_seed", 0))


def cmd_run(args) -> int:
    config = CampaignConfig(
        subject=args.subject, mode=args.mode, cost_model=args.cost_model,
        budget_seconds=args.budget_seconds, rng_seed=args.rng_seed,
        n=args.n, value_range=args.value_range, sync_dir=args.sync_dir,
        import_interval=args.import_interval, bse_depth=args.bse_depth,
        heuristic=args.heuristic, stop_at_cost=args.stop_at_cost,
        fuzzer_iterations=args.fuzzer_iterations,
        symexe_iterations=args.symexe_iterations)
    # Fail on a bad subject before any worker starts.
    _subject_from_args(args)
    stats = run_campaign(config)
    print(f"subject: {stats.subject}")
    print(f"mode: {stats.mode}")
    print(f"seed_cost: {stats.seed_cost}")
    print(f"best_cost: {stats.best_cost}")
    print(f"slowdown: {stats.slowdown:.3f}")
    print(f"stats: {Path(stats.sync_dir) / 'stats_merged.csv'}")
    if stats.crashed:
        print(f"worker crash: exit codes {stats.worker_exit}",
              file=sys.stderr)
        return 1
    return 0


def cmd_subjects(args) -> int:
    rows = [("name", "n", "bytes", "cost model", "description")]
    for spec in list_subjects():
        rows.append((spec.name, str(spec.n), str(spec.layout.byte_len),
                     spec.cost_model, spec.description))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for row in rows:
        head = "  ".join(row[i].ljust(widths[i]) for i in range(4))
        print(f"{head}  {row[4]}")
    return 0


def cmd_replay(args) -> int:
    subject = _subject_from_args(args)
    raw = Path(args.input_file).read_bytes()
    cost_model = args.cost_model or subject.cost_model
    res = execute(subject.program, raw, cost_model=cost_model)
    new_cov, _ = classify_coverage(res.bitmap, set())
    print(f"subject: {subject.name} (n={subject.n})")
    print(f"cost_model: {cost_model}")
    print(f"status: {res.status}")
    print(f"cost: {res.cost}")
    print(f"new_coverage: {'yes' if new_cov else 'no'}")
    if res.observations:
        print(f"observations: {res.observations}")
    if res.status != STATUS_OK:
        if res.error:
            print(f"error: {res.error}", file=sys.stderr)
        return 1
    return 0


def cmd_smt(args) -> int:
    subject = _subject_from_args(args)
    raw = (Path(args.input).read_bytes() if args.input
           else bytes(subject.seed_input))
    cost_model = args.cost_model or subject.cost_model
    run = concolic_execute(subject.program, raw, cost_model=cost_model)
    objective = None
    if args.maximize:
        if run.symbolic_cost is None:
            print("error: --maximize needs the user_defined cost model",
                  file=sys.stderr)
            return 2
        objective = run.symbolic_cost.expr
    domain = Domain.from_layout(subject.program.input_layout)
    sys.stdout.write(to_smtlib(run.pc, domain, objective))
    return 0


def _read_curve(path: Path) -> list[tuple[float, int]]:
    """Parse (elapsed, cost) points from a stats CSV; both the per-worker
    and the merged header spellings are accepted."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            cost_key = ("best_cost" if "best_cost" in fields
                        else "cost" if "cost" in fields else None)
            if "elapsed_s" not in fields or cost_key is None:
                raise ValueError("bad header")
            points = [(float(row["elapsed_s"]), int(row[cost_key]))
                      for row in reader]
    except (OSError, ValueError, TypeError, KeyError) as e:
        raise ValueError(f"malformed stats file: {path}") from e
    if not points:
        raise ValueError(f"malformed stats file: {path} (no data rows)")
    return points


def _read_report(stats_path: Path) -> dict:
    """Campaign metadata from the report.txt next to a stats file."""
    meta = {}
    report = stats_path.parent / "report.txt"
    if report.exists():
        for line in report.read_text().splitlines():
            key, sep, value = line.partition(":")
            if sep:
                meta[key.strip()] = value.strip()
    return meta


def _fmt_time(t: float | None) -> str:
    return f"{t:.1f}" if t is not None else "-"


def cmd_compare(args) -> int:
    runs = []
    for name in args.stats_files:
        path = Path(name)
        curve = _read_curve(path)
        meta = _read_report(path)
        mode = meta.get("mode", "?")
        seed_cost = int(meta.get("seed_cost", curve[0][1]))
        best_cost = int(meta.get("best_cost", curve[-1][1]))
        runs.append((mode, meta.get("subject", path.parent.name),
                     seed_cost, best_cost, curve))
    runs.sort(key=lambda r: _MODE_ORDER.get(r[0], len(MODES)))
    overall_best = max(r[3] for r in runs)

    def time_to(curve, threshold: float):
        for t, c in curve:
            if c >= threshold - 1e-9:
                return t
        return None

    header = ("mode", "subject", "seed", "best", "slowdown",
              "t50%", "t90%", "t100%")
    table = [header]
    for mode, subj, seed, best, curve in runs:
        slowdown = best / seed if seed > 0 else float("inf")
        table.append((
            mode, subj, str(seed), str(best), f"{slowdown:.3f}",
            _fmt_time(time_to(curve, 0.5 * overall_best)),
            _fmt_time(time_to(curve, 0.9 * overall_best)),
            _fmt_time(time_to(curve, float(overall_best)))))
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    for row in table:
        print("  ".join(row[i].ljust(widths[i]) for i in range(len(header))))

    curve_lines = ["mode,elapsed_s,best_cost"]
    for mode, _, _, _, curve in runs:
        curve_lines += [f"{mode},{t:.3f},{c}" for t, c in curve]
    body = "\n".join(curve_lines) + "\n"
    if args.csv:
        Path(args.csv).write_text(body)
    else:
        print()
        sys.stdout.write(body)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SubjectError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
