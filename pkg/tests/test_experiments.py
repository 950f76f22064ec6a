import numpy as np
import pytest

from latticewalk.config import load_preset, parse_config_text
from latticewalk.experiments import (
    CHAIN_COLUMNS,
    CLIP_COLUMNS,
    HEAVY_COLUMNS,
    MOMENT_COLUMNS,
    MSE_COLUMNS,
    ExperimentResult,
    effective_batch_size,
    linreg_setup,
    mse_table,
    run_experiment,
)


def _cfg(text):
    return parse_config_text(text)


def test_batch_size_is_clamped_to_dataset(caplog):
    assert effective_batch_size(64, 500) == 64
    with caplog.at_level("WARNING"):
        assert effective_batch_size(512, 500) == 500
    assert "exceeds" in caplog.text


def test_linreg_smoke_rows():
    cfg = load_preset("linreg_smoke")
    result = run_experiment(cfg)
    assert result.columns == CHAIN_COLUMNS
    assert len(result.rows) == len(cfg.grid())
    assert [r["sampler"] for r in result.rows[:3]] == list(cfg.samplers)
    assert {r["batch_size"] for r in result.rows} == {8, 200}
    for row in result.rows:
        assert row["runtime_s"] == ""
        assert row["diverged_count"] == 0
        assert 0 <= row["kl_fit_true"] < 1.0 and 0 <= row["kl_true_fit"] < 1.0
    (line,) = result.summary
    assert line.startswith("Monte Carlo reference") and "2000 exact posterior draws" in line


def test_runtime_column_when_requested():
    cfg = load_preset("linreg_smoke").replace(samplers=("sglrw",), batch_sizes=(8,), n_iters=50, burn_in=10,
                                              record_runtime=True)
    (row,) = run_experiment(cfg).rows
    assert isinstance(row["runtime_s"], float) and row["runtime_s"] >= 0


def test_diverging_runs_still_emit_rows():
    cfg = _cfg("experiment = linreg\ndim = 3\nn_data = 100\nsamplers = sgld, sglrw\nbatch_sizes = 4\n"
               "base_steps = 0.5\nschedule = fixed\nn_chains = 4\nn_iters = 100\nburn_in = 50\nthin = 1")
    sgld, sglrw = run_experiment(cfg).rows
    assert sgld["kl_fit_true"] == np.inf and sgld["frob_error"] == np.inf
    assert sglrw["diverged_count"] == 0 and np.isfinite(sglrw["kl_fit_true"])
    assert "inf" in ExperimentResult(CHAIN_COLUMNS, [sgld]).to_csv()


def test_mse_sweep_smoke():
    cfg = _cfg("experiment = mse_sweep\ndim = 3\nn_data = 100\nsamplers = sgld, sglrw\nbatch_sizes = 10\n"
               "base_steps = 1e-4, 1e-3\nseeds = 0, 1\nn_chains = 50\nn_iters = 300")
    result = run_experiment(cfg)
    assert result.columns == MSE_COLUMNS
    assert len(result.rows) == len(result.covariances) == 8
    for row in result.rows:
        assert row["sq_frob_error"] == pytest.approx(row["frob_error"] ** 2)
    _, truth, _ = linreg_setup(cfg)
    table = mse_table(result, truth.covariance)
    assert set(table) == {(k, 10, s) for k in ("sgld", "sglrw") for s in (1e-4, 1e-3)}
    rows = [r for r in result.rows if r["sampler"] == "sgld" and r["base_step"] == 1e-3]
    assert table["sgld", 10, 1e-3] == pytest.approx(np.mean([r["sq_frob_error"] for r in rows]))


def test_heavy1d_grid_and_schema():
    cfg = _cfg("experiment = heavy1d\nsamplers = sgld, sglrw\nnoise_scales = 1, 20\nn_chains = 2\n"
               "n_iters = 600\nburn_in = 100")
    result = run_experiment(cfg)
    assert result.columns == HEAVY_COLUMNS
    assert [(r["noise_scale"], r["sampler"]) for r in result.rows] == [
        (1.0, "sgld"), (1.0, "sglrw"), (20.0, "sgld"), (20.0, "sglrw")]
    assert all(0 <= r["tv_distance"] <= 1 for r in result.rows)


def test_moment_smoke_passes():
    result = run_experiment(load_preset("moment_smoke"))
    assert result.columns == MOMENT_COLUMNS
    assert result.passed, [r for r in result.rows if r["status"] != "PASS"]
    checks = {r["check"] for r in result.rows}
    assert checks == {"second_moment", "sglrw_diagonal_zero", "frobenius_order", "third_moment"}
    assert [line.split()[0] for line in result.summary] == ["PASS"] * 4


def test_clip_constant_experiment():
    result = run_experiment(load_preset("clip_constant"))
    assert result.columns == CLIP_COLUMNS and result.passed
    assert [r["quantity"] for r in result.rows] == ["closed_form", "monte_carlo"]


def test_csv_formatting():
    result = ExperimentResult(("a", "b", "c"), [dict(a=0.1, b=True, c=np.int64(3))])
    assert result.to_csv() == "a,b,c\n0.1,true,3\n"
    assert ExperimentResult(("status",), [dict(status="FAIL")]).passed is False


def test_logreg_from_data_file(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((120, 2)) * [1.0, 50.0] + [0.0, 100.0]
    y = (x[:, 0] + rng.standard_normal(120) > 0).astype(int)
    path = tmp_path / "data.csv"
    np.savetxt(path, np.column_stack([x, y]), delimiter=",")
    cfg = _cfg(f"experiment = logreg\ndata_file = {path}\nsamplers = sglrw\nbatch_sizes = 16\nbase_steps = 0.01\n"
               "n_chains = 50\nn_iters = 200\nreference_iters = 2000\nreference_chains = 2")
    (row,) = run_experiment(cfg).rows
    assert (row["d"], row["N"]) == (3, 120)
    assert np.isfinite(row["kl_fit_true"])
