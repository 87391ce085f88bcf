"""Command-line front end.

    sdpc run --config CFG [--seed N] [--sweep key=v1,v2 ...] [--out results.csv] [--workers N]
    sdpc attacks --config CFG [--weaken KNOB ...] [--seeds N] [--out report.csv]
    sdpc plotdata --fig fig5|fig6|fig7|fig8 --in results.csv [--out table.csv]

Exit codes: 0 success, 1 config error, 2 attack-suite failure, 3 partial runs.
The default output directory is ``$SDPC_RESULTS_DIR`` (else ``results``).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import adversary, experiments
from .config import WEAKEN_KNOBS, ConfigError, load, parse_sweep_arg

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ATTACK = 2
EXIT_PARTIAL = 3


def cmd_run(args) -> int:
    cfg = load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    sweep = dict(parse_sweep_arg(s) for s in args.sweep)
    points = experiments.expand(cfg, sweep)
    rows = experiments.run_many(points, args.workers)
    out = Path(args.out) if args.out else experiments.default_results_dir() / "results.csv"
    experiments.append_results(out, rows)
    print(experiments.summary_table(rows))
    print(f"{len(rows)} row(s) appended to {out}")
    partial = [r for r in rows if r["partial"] in (True, "True")]
    if partial:
        print(f"warning: {len(partial)} run(s) did not complete every request", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_attacks(args) -> int:
    cfg = load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    seeds = [cfg.seed + i for i in range(args.seeds)]
    weaken = sorted(set(args.weaken))
    outcomes = adversary.attack_suite(cfg, seeds, weaken)
    out = Path(args.out) if args.out else experiments.default_results_dir() / "attacks.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(adversary.report_csv(outcomes))
    for o in outcomes:
        tag = "control" if tuple(sorted(o.weaken)) != tuple(weaken) else "scheme"
        knobs = "+".join(o.weaken) or "-"
        print(f"{o.attack:<19} {tag:<8} {knobs:<28} seed={o.seed}  success={o.success}")
    ok = adversary.suite_passed(outcomes, weaken)
    print(f"{len(outcomes)} outcome(s) written to {out}; suite {'passed' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_ATTACK


def cmd_plotdata(args) -> int:
    rows = experiments.read_results(args.input)
    try:
        text, gaps = experiments.plotdata_csv(rows, args.fig)
    except experiments.PlotDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for g in gaps:
        print(f"gap: {g}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdpc", description="Protected-content distribution experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one config or a sweep and append result rows")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2")
    r.add_argument("--out")
    r.add_argument("--workers", type=int, help="parallel runs (default: all cores)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("attacks", help="run the attack suite against the scheme and its controls")
    a.add_argument("--config", required=True)
    a.add_argument("--weaken", action="append", default=[], choices=WEAKEN_KNOBS)
    a.add_argument("--seed", type=int)
    a.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    a.add_argument("--out")
    a.set_defaults(func=cmd_attacks)

    d = sub.add_parser("plotdata", help="tidy (x, series, y) table for one figure")
    d.add_argument("--fig", required=True, choices=sorted(experiments.FIGURES))
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
