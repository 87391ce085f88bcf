"""Sweeps, result rows and plot tables.

A results file is append-only CSV.  Each row is one completed run and
carries every config field (``cfg.*`` columns) next to the headline
metrics, so a number can always be traced back to the exact setup that
produced it.  ``results_version`` changes whenever the column set does.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, SimConfig
from .sim.engine import RunMetrics, Simulator

RESULTS_VERSION = "1"
RESULTS_DIR_ENV = "SDPC_RESULTS_DIR"

HEAD_FIELDS = (
    "results_version", "scheme", "cache_size", "cache_fraction", "churn_case", "h_fraction", "seed",
    "avg_download_time", "publisher_load", "timeout_ratio", "runtime",
)
METRIC_FIELDS = tuple(f for f in RunMetrics.CSV_FIELDS if f not in ("scheme", "seed", "avg_download_time",
                                                                    "publisher_load", "timeout_ratio"))


def result_fields(cfg: SimConfig) -> list[str]:
    return [*HEAD_FIELDS, *METRIC_FIELDS, *("cfg." + k for k in cfg.flat())]


def default_results_dir() -> Path:
    return Path(os.environ.get(RESULTS_DIR_ENV, "results"))


# -- sweeps --


def expand(cfg: SimConfig, sweep: dict[str, list] | None = None) -> list[SimConfig]:
    """Cartesian product of the config's sweep lists and ``sweep``.

    Keys in ``sweep`` replace the config's own list for that key.  Points
    come out in row-major order of the merged key order.
    """
    grid = dict(cfg.sweep)
    grid.update(sweep or {})
    base = cfg.replace()
    base.sweep = {}
    if not grid:
        return [base]
    keys = list(grid)
    points = []
    for values in itertools.product(*(grid[k] for k in keys)):
        points.append(base.replace(**dict(zip(keys, values))))
    return points


def result_row(cfg: SimConfig, m: RunMetrics, runtime: float) -> dict:
    row = {
        "results_version": RESULTS_VERSION,
        "scheme": cfg.scheme.name,
        "cache_size": m.cache_bytes,
        "cache_fraction": repr(float(cfg.cache.size_fraction)),
        "churn_case": cfg.scheme.churn_case,
        "h_fraction": repr(float(cfg.scheme.h_fraction)),
        "seed": cfg.seed,
        "avg_download_time": repr(float(m.avg_download_time)),
        "publisher_load": repr(float(m.publisher_load)),
        "timeout_ratio": repr(float(m.timeout_ratio)),
        "runtime": f"{runtime:.3f}",
    }
    metrics = m.row()
    for f in METRIC_FIELDS:
        row[f] = metrics[f]
    for k, v in cfg.flat().items():
        row["cfg." + k] = v
    return row


def run_point(cfg: SimConfig) -> dict:
    t0 = time.perf_counter()
    m = Simulator(cfg).run()
    return result_row(cfg, m, time.perf_counter() - t0)


def run_many(cfgs: list[SimConfig], workers: int | None = None) -> list[dict]:
    """Run every point; rows come back in input order whatever the worker count."""
    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, min(workers, len(cfgs)))
    if workers == 1:
        return [run_point(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, cfgs))


# -- results file --


def append_results(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        return
    path = Path(path)
    fields = list(rows[0].keys())
    exists = path.exists() and path.stat().st_size > 0
    if exists:
        with path.open(newline="") as fh:
            header = next(csv.reader(fh))
        if header != fields:
            raise ConfigError(str(path), "results file has a different column set; write to a new file")
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        if not exists:
            w.writeheader()
        w.writerows(rows)


def read_results(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def summary_table(rows: list[dict]) -> str:
    cols = ("scheme", "cache_size", "churn_case", "h_fraction", "seed",
            "avg_download_time", "publisher_load", "timeout_ratio", "partial", "runtime")
    lines = ["  ".join(f"{c:>17}" for c in cols)]
    for r in rows:
        cells = []
        for c in cols:
            v = r[c]
            if c in ("avg_download_time", "publisher_load", "timeout_ratio", "h_fraction"):
                v = f"{float(v):.4g}"
            cells.append(f"{v!s:>17}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


# -- plot tables --

PLOT_REQUIRED = ("scheme", "cache_size", "churn_case", "h_fraction", "seed")

FIGURES = {
    # figure: (x column, y column, series that must be present)
    "fig5": ("cache_size", "avg_download_time",
             ("sdpc", "ndn-e2e", "ndn-groupkey-case1", "ndn-groupkey-case2", "ndn-groupkey-case3")),
    "fig6": ("h_fraction", "avg_download_time", ("ndn-plain", "sdpc", "mcac")),
    "fig7": ("cache_size", "publisher_load", ("sdpc-case3", "eu-re-case3")),
    "fig8": ("cache_size", "timeout_ratio", ("sdpc-case3", "eu-re-case3")),
}


class PlotDataError(ValueError):
    pass


def series_label(row: dict, fig: str) -> str:
    label = row["scheme"]
    case = int(row["churn_case"])
    if case:
        label += f"-case{case}"
    # h_fraction is the x axis of fig6; elsewhere it tells MCAC variants apart
    if row["scheme"] == "mcac" and fig != "fig6":
        label += f"-h{float(row['h_fraction']):g}"
    return label


def _num(text: str) -> float:
    return float(text)


def plotdata(rows: list[dict], fig: str) -> tuple[list[tuple[str, str, str, int]], list[str]]:
    """Tidy ``(x, series, y, n)`` rows, y averaged over seeds, plus gaps.

    A gap is an (series, x) pair on the figure's grid with no run behind
    it; the grid is every x seen in the results.
    """
    if fig not in FIGURES:
        raise PlotDataError(f"unknown figure {fig!r}; choose from {sorted(FIGURES)}")
    x_col, y_col, expected = FIGURES[fig]
    needed = (*PLOT_REQUIRED, y_col)
    if not rows:
        raise PlotDataError("no results; required columns: " + ", ".join(needed))
    missing = [c for c in needed if c not in rows[0]]
    if missing:
        raise PlotDataError("results lack required columns: " + ", ".join(missing))
    groups: dict[tuple[str, float], list[float]] = {}
    xs: set[float] = set()
    for r in rows:
        if fig == "fig6" and r["scheme"] not in ("mcac", "sdpc", "ndn-plain"):
            continue
        x = _num(r[x_col])
        xs.add(x)
        groups.setdefault((series_label(r, fig), x), []).append(_num(r[y_col]))
    table = []
    for (series, x), ys in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        finite = [y for y in ys if not math.isnan(y)]
        y = sum(finite) / len(finite) if finite else float("nan")
        table.append((_fmt(x), series, repr(y), len(ys)))
    present = {s for s, _ in groups}
    gaps = []
    for series in sorted(present | set(expected)):
        for x in sorted(xs):
            if (series, x) not in groups:
                gaps.append(f"{series} at {x_col}={_fmt(x)}")
    return table, gaps


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def plotdata_csv(rows: list[dict], fig: str) -> tuple[str, list[str]]:
    table, gaps = plotdata(rows, fig)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "series", "y", "n"])
    w.writerows(table)
    return buf.getvalue(), gaps
