import math

import pytest

from conftest import small_config
from sdpc import experiments
from sdpc.config import ConfigError


def _row(scheme="sdpc", cache=100, y=1.0, seed=1, case=0, h=0.2):
    return {"scheme": scheme, "cache_size": str(cache), "churn_case": str(case), "h_fraction": repr(h),
            "seed": str(seed), "avg_download_time": repr(y), "publisher_load": repr(y), "timeout_ratio": repr(y)}


def test_expand_is_cartesian():
    cfg = small_config().replace()
    cfg.sweep = {"scheme.name": ["sdpc", "mcac"], "seed": [1, 2, 3]}
    pts = experiments.expand(cfg)
    assert len(pts) == 6
    assert [(p.scheme.name, p.seed) for p in pts[:3]] == [("sdpc", 1), ("sdpc", 2), ("sdpc", 3)]
    assert all(not p.sweep for p in pts)
    # a command-line list replaces the file's list for that key
    pts = experiments.expand(cfg, {"seed": ["9"]})
    assert [p.seed for p in pts] == [9, 9]


def test_expand_without_sweep():
    cfg = small_config()
    assert len(experiments.expand(cfg)) == 1


def test_result_rows_carry_provenance():
    cfg = small_config(**{"workload.duration": 0.5})
    row = experiments.run_point(cfg)
    assert row["results_version"] == experiments.RESULTS_VERSION
    assert row["cfg.workload.duration"] == 0.5
    assert list(row)[: len(experiments.HEAD_FIELDS)] == list(experiments.HEAD_FIELDS)
    assert float(row["avg_download_time"]) > 0


def test_run_many_keeps_order():
    cfgs = [small_config(**{"workload.duration": 0.3}).replace(seed=s) for s in (3, 1, 2)]
    rows = experiments.run_many(cfgs, workers=1)
    assert [r["seed"] for r in rows] == [3, 1, 2]


def test_append_checks_header(tmp_path):
    out = tmp_path / "r.csv"
    experiments.append_results(out, [{"a": 1, "b": 2}])
    experiments.append_results(out, [{"a": 3, "b": 4}])
    assert out.read_text() == "a,b\n1,2\n3,4\n"
    with pytest.raises(ConfigError):
        experiments.append_results(out, [{"a": 1, "c": 2}])
    experiments.append_results(out, [])
    assert len(experiments.read_results(out)) == 2


def test_plotdata_means_and_gaps():
    rows = [_row(y=1.0, seed=1), _row(y=3.0, seed=2), _row(cache=200, y=5.0),
            _row("ndn-e2e", 100, 7.0)]
    table, gaps = experiments.plotdata(rows, "fig5")
    assert ("100", "sdpc", "2.0", 2) in table
    assert ("200", "sdpc", "5.0", 1) in table
    assert "ndn-e2e at cache_size=200" in gaps
    assert "ndn-groupkey-case1 at cache_size=100" in gaps


def test_series_labels():
    assert experiments.series_label(_row("ndn-groupkey", case=2), "fig5") == "ndn-groupkey-case2"
    assert experiments.series_label(_row("mcac", h=0.2), "fig5") == "mcac-h0.2"
    assert experiments.series_label(_row("mcac", h=0.2), "fig6") == "mcac"


def test_fig6_uses_h_axis_and_ignores_other_schemes():
    rows = [_row("mcac", h=0.0, y=1.0), _row("mcac", h=1.0, y=4.0), _row("eu-re", h=0.0)]
    table, _ = experiments.plotdata(rows, "fig6")
    assert [(x, s) for x, s, _, _ in table] == [("0", "mcac"), ("1", "mcac")]


def test_plotdata_errors():
    with pytest.raises(experiments.PlotDataError, match="required columns"):
        experiments.plotdata([], "fig5")
    with pytest.raises(experiments.PlotDataError, match="seed"):
        experiments.plotdata([{"scheme": "sdpc"}], "fig7")
    with pytest.raises(experiments.PlotDataError):
        experiments.plotdata([_row()], "fig9")


def test_nan_rows_do_not_poison_means():
    rows = [_row(y=2.0), _row(y=float("nan"), seed=2)]
    table, _ = experiments.plotdata(rows, "fig5")
    assert table[0][2] == "2.0" and table[0][3] == 2
    assert math.isnan(float(experiments.plotdata([_row(y=float("nan"))], "fig5")[0][0][2]))
