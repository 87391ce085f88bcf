"""Regenerate the desk-scale figure tables.

Runs every shipped figure config through ``sdpc run`` into one results file
per figure, then writes the tidy ``plotdata`` table next to it.  About one
second per run on one core; the full set is a little over 300 runs.

    python3 scripts/desk_sweep.py --out results/desk [--seeds 1,2] [--workers 4]
"""

import argparse
import sys
from pathlib import Path

from sdpc import cli

ROOT = Path(__file__).resolve().parent.parent
JOBS = {
    "fig5": ["fig5.yaml", "fig5_groupkey.yaml"],
    "fig6": ["fig6.yaml"],
    "fig7": ["fig78.yaml"],
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/desk")
    ap.add_argument("--seeds", help="comma-separated seeds (default: the configs' own)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--figs", default="fig5,fig6,fig7")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    worst = 0
    for fig in args.figs.split(","):
        results = out / f"{fig}_results.csv"
        if results.exists():
            results.unlink()
        for config in JOBS[fig]:
            run = ["run", "--config", str(ROOT / "configs" / config), "--out", str(results),
                   "--workers", str(args.workers)]
            if args.seeds:
                run += ["--sweep", f"seed={args.seeds}"]
            code = cli.main(run)
            if code == cli.EXIT_CONFIG:
                return code
            worst = max(worst, code)
        # fig7 and fig8 share one sweep
        for table in (["fig7", "fig8"] if fig == "fig7" else [fig]):
            code = cli.main(["plotdata", "--fig", table, "--in", str(results), "--out", str(out / f"{table}.csv")])
            if code:
                return code
    return worst


if __name__ == "__main__":
    sys.exit(main())
