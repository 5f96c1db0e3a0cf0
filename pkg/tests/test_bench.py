import math

import numpy as np
import pytest

import dsdr.bench as bench
from dsdr import Method, cli, fit_global
from dsdr.bench import (
    ExperimentConfig,
    ResultTable,
    TimingPoint,
    check_budget,
    emit_results,
    load_csv,
    read_results,
    run_experiment,
    timing_sweep,
    write_csv,
)
from dsdr.errors import BudgetExceeded, ConfigError, MissingColumn, NonNumericCell, ParseError
from dsdr.metrics import METRIC_FIELDS


def test_load_csv_small(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("y,x1,x2\n1,2,3\n4,5,6\n7,8,9.5\n")
    d = load_csv(f, "y")
    assert (d.n, d.p) == (3, 2)
    assert np.array_equal(d.y, [1, 4, 7]) and np.array_equal(d.x[:, 1], [3, 6, 9.5])
    d = load_csv(f, "x1")
    assert np.array_equal(d.y, [2, 5, 8]) and np.array_equal(d.x[:, 0], [1, 4, 7])
    assert np.array_equal(load_csv(f, 2).y, [3, 6, 9.5])
    z = load_csv(f, "y", standardize=True)
    assert np.allclose(z.x.mean(axis=0), 0) and np.allclose(z.x.std(axis=0, ddof=1), 1)


def test_load_csv_errors(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("y,x1\n1,2\n3,oops\n")
    with pytest.raises(MissingColumn):
        load_csv(f, "nope")
    with pytest.raises(MissingColumn):
        load_csv(f, 7)
    with pytest.raises(NonNumericCell) as err:
        load_csv(f, "y")
    assert (err.value.row, err.value.column) == (3, 2)
    f.write_text("y,x1\n1,2\n3\n")
    with pytest.raises(ParseError) as err:
        load_csv(f, "y")
    assert err.value.row == 3
    f.write_text("")
    with pytest.raises(ParseError):
        load_csv(f, 0)
    f.write_text("y,x\n1,nan\n")
    with pytest.raises(NonNumericCell):
        load_csv(f, 0)


def test_csv_round_trip_full_precision(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 4)) * 10.0 ** rng.integers(-20, 20, size=(50, 4))
    y = rng.standard_normal(50)
    f = tmp_path / "r.csv"
    write_csv(f, x, y)
    d = load_csv(f, "y")
    assert d.x.tobytes() == x.tobytes() and d.y.tobytes() == y.tobytes()


def test_emit_results_layout(tmp_path):
    f = tmp_path / "empty.csv"
    emit_results(ResultTable(), f)
    lines = f.read_text().splitlines()
    assert len(lines) == 1
    head = lines[0].split(",")
    assert head[-7:] == ["rep", *METRIC_FIELDS, "error_flag"]

    table = run_experiment(ExperimentConfig(reps=2, n=200, p=5))
    f = tmp_path / "two.csv"
    emit_results(table, f)
    back = read_results(f)
    assert [r["rep"] for r in back.rows] == [0, 1, "mean", "std"]
    assert back.columns == table.columns
    for a, b in zip(table.rows, back.rows):
        for c in table.columns:
            va, vb = a.get(c, ""), b[c]
            if isinstance(va, float) and math.isnan(va):
                assert math.isnan(vb)
            else:
                assert va == vb or str(va) == str(vb)


def test_aggregates_reproducible_from_rows():
    table = run_experiment(ExperimentConfig(reps=5, n=300, p=6, model=2))
    rows = table.data_rows()
    for c in ("trace_correlation", "r_squared", "r_squared_2"):
        vals = np.array([r[c] for r in rows])
        assert table.mean(c) == pytest.approx(vals.mean(), abs=1e-15)
        assert table.aggregate_row("std")[c] == pytest.approx(vals.std(ddof=1), abs=1e-15)
    assert table.aggregate_row("mean")["successes"] == 5


def test_determinism_and_seeds():
    cfg = ExperimentConfig(mode="approx-hetero", reps=3, n=400, p=6, model=3, seed=11)
    a, b = run_experiment(cfg), run_experiment(cfg)
    for ra, rb in zip(a.data_rows(), b.data_rows()):
        assert ra["trace_correlation"] == rb["trace_correlation"] and ra["r_squared"] == rb["r_squared"]
    # repetition r of seed s equals repetition 0 of seed s + r
    single = run_experiment(ExperimentConfig(mode="approx-hetero", reps=1, n=400, p=6, model=3, seed=13))
    assert single.data_rows()[0]["trace_correlation"] == a.data_rows()[2]["trace_correlation"]


def test_exact_mode_equals_global_per_repetition():
    g = run_experiment(ExperimentConfig(mode="global", reps=5, model=1))
    e = run_experiment(ExperimentConfig(mode="exact", reps=5, model=1, partition="hetero-unequal"))
    for rg, re_ in zip(g.data_rows(), e.data_rows()):
        assert abs(rg["trace_correlation"] - re_["trace_correlation"]) <= 1e-10
    assert e.data_rows()[0]["bytes_up"] > 0 and g.data_rows()[0]["bytes_up"] == 0


def test_error_isolation(monkeypatch):
    real = bench.estimate

    def flaky(config, data, rep_seed):
        if rep_seed == 1:
            raise ConfigError("boom")
        return real(config, data, rep_seed)

    monkeypatch.setattr(bench, "estimate", flaky)
    table = run_experiment(ExperimentConfig(reps=4, n=300, p=5))
    rows = table.data_rows()
    assert [r["error_flag"] for r in rows] == [0, 1, 0, 0]
    assert "boom" in rows[1]["error"] and math.isnan(rows[1]["trace_correlation"])
    good = [r["trace_correlation"] for r in rows if not r["error_flag"]]
    assert table.mean("trace_correlation") == pytest.approx(np.mean(good), abs=1e-15)
    assert table.aggregate_row("mean")["successes"] == 3


@pytest.mark.parametrize("kw", [
    dict(mode="exact", method="save"), dict(reps=0), dict(n=0), dict(model=9), dict(model=6, p=5),
    dict(alpha=1.5), dict(H=1), dict(mode="nope"), dict(partition="hetero-unequal", S=4, mode="exact"),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_mode_aliases():
    assert ExperimentConfig(mode="approx-homogeneous").mode.value == "approx-homo"
    assert ExperimentConfig(mode="approx-heterogeneous").partition.value == "hetero-equal"


def test_budget(monkeypatch):
    check_budget(1000, 100, budget=100_000)
    with pytest.raises(BudgetExceeded):
        check_budget(1001, 100, budget=100_000)
    monkeypatch.setenv("DSDR_BUDGET_CELLS", "5000")
    table = timing_sweep([TimingPoint("global", 400, 10, 1), TimingPoint("exact", 1000, 10, 5)], repeats=1)
    a, b = table.rows
    assert a["error_flag"] == 0 and a["wall_time_seconds"] > 0
    assert b["error_flag"] == 1 and "BudgetExceeded" in b["error"]
    monkeypatch.setenv("DSDR_BUDGET_CELLS", "lots")
    with pytest.raises(ConfigError):
        bench.budget_cells()


def test_cli_run_and_fit(tmp_path):
    out = tmp_path / "run.csv"
    code = cli.main(["run", "--method", "sir", "--mode", "approx-hetero", "--model", "3", "--xmode", "dependent",
                     "--n", "500", "--p", "8", "--slices", "10", "--workers", "5", "--alpha", "0.9",
                     "--aggregate", "basis", "--partition", "hetero-unequal", "--reps", "3", "--seed", "4",
                     "--transport", "tcp", "--out", str(out)])
    assert code == 0
    table = read_results(out)
    assert len(table.rows) == 5 and table.rows[0]["partition"] == "hetero-unequal"

    data = tmp_path / "in.csv"
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200, 3))
    write_csv(data, x, x[:, 0] + 0.1 * rng.standard_normal(200), response_name="target")
    out2 = tmp_path / "fit.csv"
    assert cli.main(["fit", "--input", str(data), "--response", "target", "--mode", "exact", "--out", str(out2)]) == 0
    assert read_results(out2).rows[0]["error_flag"] == 0


def test_cli_fit_writes_directions(tmp_path):
    data = tmp_path / "in.csv"
    rng = np.random.default_rng(2)
    x = rng.standard_normal((300, 4))
    write_csv(data, x, x[:, 2] - x[:, 3] + 0.1 * rng.standard_normal(300), names=["a", "b", "c", "d"],
              response_name="target")
    dirs = tmp_path / "dirs.csv"
    assert cli.main(["fit", "--input", str(data), "--response", "0", "--kg", "1", "--out", str(tmp_path / "f.csv"),
                     "--directions", str(dirs)]) == 0
    lines = dirs.read_text().splitlines()
    assert lines[0] == "predictor,direction_1"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["a", "b", "c", "d"]
    beta = np.array([[float(ln.split(",")[1])] for ln in lines[1:]])
    want = fit_global(load_csv(data, "target"), Method.SIR, 10, 1).beta
    np.testing.assert_array_equal(beta, want)
    assert abs(beta[2, 0] + beta[3, 0]) < 0.1 and abs(beta[2, 0]) > 0.6


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    out = str(tmp_path / "o.csv")
    assert cli.main(["run", "--mode", "exact", "--method", "dr", "--out", out]) == 2
    assert cli.main(["fit", "--input", str(tmp_path / "missing.csv"), "--out", out]) == 2
    with pytest.raises(SystemExit) as err:
        cli.main(["run", "--method", "pca", "--out", out])
    assert err.value.code == 2

    def broken(config, data, rep_seed):
        raise ConfigError("always")

    monkeypatch.setattr(bench, "estimate", broken)
    assert cli.main(["run", "--reps", "2", "--out", out]) == 3
    assert "2 of 2" in capsys.readouterr().err


def test_cli_timing(tmp_path, monkeypatch):
    monkeypatch.setenv("DSDR_BUDGET_CELLS", "100000")
    out = tmp_path / "t.csv"
    code = cli.main(["timing", "--grid", "global:2000:20:1,exact:2000:20:5,exact:1e5:20:5", "--repeats", "1",
                     "--out", str(out)])
    assert code == 0
    rows = read_results(out).rows
    assert [r["error_flag"] for r in rows] == [0, 0, 1]
    assert cli.main(["timing", "--grid", "bogus", "--out", str(out)]) == 2
