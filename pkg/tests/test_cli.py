import csv
import json

import numpy as np
import pytest

from intradayvol import cli, model, storage
from intradayvol.report import read_summary_params

SHORT = ["--n-iter", "20", "--burn-in", "10", "--thin", "2"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def _rows(path):
    with open(path, newline="") as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Two simulated assets with 1-minute returns, a SSV fit and a FULL fit."""
    root = tmp_path_factory.mktemp("cli")
    for k, seed in (("a", 1), ("b", 2)):
        assert run("simulate", "--T", 1500, "--seed", seed, "--n-events", 2,
                   "--releases-per-event", 10, "--with-1min", "--out", root / k) == 0
    assert run("estimate", "--returns", root / "a/returns.csv", "--variant", "SSV", *SHORT,
               "--split", 0.8, "--out", root / "fit_ssv") == 0
    assert run("estimate", "--returns", root / "a/returns.csv", "--calendar", root / "a/calendar.csv",
               *SHORT, "--split", 0.8, "--out", root / "fit_full") == 0
    return root


class TestSimulate:
    def test_row_count(self, tmp_path):
        assert run("simulate", "--T", 1000, "--out", tmp_path) == 0
        assert len((tmp_path / "returns.csv").read_text().splitlines()) == 1001

    def test_byte_identical_reruns(self, tmp_path):
        for d in ("x", "y"):
            run("simulate", "--T", 400, "--seed", 5, "--with-1min", "--out", tmp_path / d)
        for name in ("returns.csv", "latent.csv", "calendar.csv", "returns_1min.csv", "rv.csv"):
            assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()

    def test_truth_round_trip(self, tmp_path):
        run("simulate", "--T", 300, "--n-events", 3, "--n-lags", 2, "--out", tmp_path)
        params, _, _ = model.load_config(tmp_path / "truth.json")
        expected = cli.default_truth(3, 2)
        for k in model.PARAM_KEYS:
            np.testing.assert_array_equal(getattr(params, k), getattr(expected, k))

    def test_config_file_supplies_truth(self, tmp_path):
        p = cli.default_truth(1, 1)
        p = model.ModelParams(-4.0, 0.5, 0.1, p.beta, p.alpha, p.pi)
        model.save_config(tmp_path / "c.json", p, extra={"T": 200, "n_events": 1, "n_lags": 1})
        assert run("simulate", "--config", tmp_path / "c.json", "--out", tmp_path / "o") == 0
        assert len((tmp_path / "o/returns.csv").read_text().splitlines()) == 201
        assert model.load_config(tmp_path / "o/truth.json")[0].mu_h == -4.0

    def test_manifest_records_config(self, tmp_path):
        run("simulate", "--T", 300, "--seed", 9, "--out", tmp_path)
        m = storage.read_manifest(tmp_path / "manifest_simulate.json")
        assert m["config"]["seed"] == 9 and len(m["config_hash"]) == 64


class TestEstimate:
    def test_retained_rows(self, workspace):
        assert len(_rows(workspace / "fit_ssv/draws.csv")) == 1 + 5

    def test_ssv_has_no_event_columns(self, workspace):
        header = _rows(workspace / "fit_ssv/draws.csv")[0]
        assert not any(h.startswith(("alpha", "pi[", "gamma", "sigma_alpha2")) for h in header)
        assert "beta[0]" in header

    def test_full_has_event_columns(self, workspace):
        header = _rows(workspace / "fit_full/draws.csv")[0]
        assert any(h.startswith("alpha[E000:") for h in header)
        assert "gamma" in header

    def test_summary_means_equal_draw_means(self, workspace):
        draws = storage.read_draws(workspace / "fit_full/draws.csv", "FULL")
        summary = read_summary_params(workspace / "fit_full/summary.csv")
        for k in ("mu_h", "phi", "sigma_x2", "gamma", "sigma_alpha2"):
            assert summary[k][0] == pytest.approx(getattr(draws, k).mean(), rel=1e-12)

    def test_event_section_layout(self, workspace):
        rows = _rows(workspace / "fit_full/summary.csv")
        header = next(r for r in rows if r[:2] == ["section", "event"])
        assert header[2:] == ["5 Min", "10 Min", "15 Min", "20 Min", "25 Min", "30 Min"]
        assert sum(r[0] == "pi" for r in rows) == 2

    def test_split_uses_leading_fraction(self, workspace):
        m = storage.read_manifest(workspace / "fit_ssv/manifest.json")
        assert m["config"]["n_est"] == 1200
        assert len(_rows(workspace / "fit_ssv/latent_mean.csv")) == 1201

    def test_deterministic(self, workspace, tmp_path):
        for d in ("x", "y"):
            run("estimate", "--returns", workspace / "a/returns.csv", "--variant", "SV", *SHORT,
                "--seed", 4, "--out", tmp_path / d)
        assert (tmp_path / "x/draws.csv").read_bytes() == (tmp_path / "y/draws.csv").read_bytes()

    def test_multiple_chains(self, workspace, tmp_path):
        assert run("estimate", "--returns", workspace / "a/returns.csv", "--variant", "SV", *SHORT,
                   "--chains", 2, "--out", tmp_path) == 0
        assert len(_rows(tmp_path / "draws.csv")) == 1 + 10

    def test_full_needs_calendar(self, workspace, tmp_path, capsys):
        assert run("estimate", "--returns", workspace / "a/returns.csv", *SHORT, "--out", tmp_path) == 2
        assert "calendar" in capsys.readouterr().err

    def test_bad_split_is_config_error(self, workspace, tmp_path):
        assert run("estimate", "--returns", workspace / "a/returns.csv", "--variant", "SV",
                   "--split", 1.5, "--out", tmp_path) == 1

    def test_bad_schedule_is_config_error(self, workspace, tmp_path):
        assert run("estimate", "--returns", workspace / "a/returns.csv", "--variant", "SV",
                   "--n-iter", 10, "--burn-in", 10, "--out", tmp_path) == 1

    def test_prior_override_recorded(self, workspace, tmp_path):
        run("estimate", "--returns", workspace / "a/returns.csv", "--variant", "SV", *SHORT,
            "--prior", "ig_x_scale=0.05", "--out", tmp_path)
        m = storage.read_manifest(tmp_path / "manifest.json")
        assert m["config"]["prior.ig_x_scale"] == 0.05


@pytest.fixture(scope="module")
def forecasts(workspace):
    out = workspace / "fc"
    for asset in ("a", "b"):
        fit = workspace / ("fit_full" if asset == "a" else "fit_ssv")
        cal = ["--calendar", workspace / asset / "calendar.csv"] if asset == "a" else []
        assert run("forecast", "--model", "proposal", "--fit", fit, "--returns",
                   workspace / asset / "returns.csv", *cal, "--out", out / f"prop_{asset}.csv") == 0
        assert run("forecast", "--model", "garch", "--returns", workspace / asset / "returns.csv",
                   "--split", 0.8, "--out", out / f"garch_{asset}.csv") == 0
    assert run("forecast", "--model", "har", "--returns", workspace / "a/returns.csv",
               "--rv", workspace / "a/rv.csv", "--split", 0.8, "--out", out / "har_a.csv") == 0
    return out


class TestForecastEvaluateBacktest:
    def test_hold_out_only(self, forecasts):
        assert len(_rows(forecasts / "garch_a.csv")) == 1 + 300
        assert len(_rows(forecasts / "prop_a.csv")) == 1 + 300

    def test_fit_json_written(self, forecasts):
        d = json.loads((forecasts / "garch_a.fit.json").read_text())
        assert d["model"] == "GARCH" and set(d["params"]) == {"omega", "a", "b"}

    def test_missing_rv_names_model(self, workspace, tmp_path, capsys):
        code = run("forecast", "--model", "ar1-rv", "--returns", workspace / "a/returns.csv",
                   "--out", tmp_path / "f.csv")
        assert code == 2
        assert "AR1-RV" in capsys.readouterr().err

    def test_evaluate_single_competitor(self, workspace, forecasts, tmp_path):
        assert run("evaluate", "--rv", workspace / "a/rv.csv", "--proposal", forecasts / "prop_a.csv",
                   "--competitor", f"GARCH={forecasts / 'garch_a.csv'}", "--out", tmp_path) == 0
        rows = _rows(tmp_path / "table1.csv")
        assert rows[0] == ["", "GARCH"]
        assert 0 <= float(rows[1][1]) <= 1

    def test_evaluate_two_competitors(self, workspace, forecasts, tmp_path):
        assert run("evaluate", "--rv", workspace / "a/rv.csv", "--proposal", forecasts / "prop_a.csv",
                   "--competitor", f"GARCH={forecasts / 'garch_a.csv'}",
                   "--competitor", f"HAR={forecasts / 'har_a.csv'}", "--out", tmp_path) == 0
        assert _rows(tmp_path / "table1.csv")[0] == ["", "GARCH", "HAR"]

    def test_backtest(self, workspace, forecasts, tmp_path):
        args = ["backtest", "--returns1", workspace / "a/returns.csv",
                "--returns2", workspace / "b/returns.csv",
                "--returns1-1min", workspace / "a/returns_1min.csv",
                "--returns2-1min", workspace / "b/returns_1min.csv",
                "--model", f"Proposal={forecasts / 'prop_a.csv'},{forecasts / 'prop_b.csv'}",
                "--model", f"GARCH={forecasts / 'garch_a.csv'},{forecasts / 'garch_b.csv'}"]
        assert run(*args, "--out", tmp_path / "x") == 0
        assert run(*args, "--out", tmp_path / "y") == 0
        rows = _rows(tmp_path / "x/table2.csv")
        assert rows[0] == ["", "Proposal", "GARCH"]
        assert [r[0] for r in rows[1:]] == ["Ann. Mean", "Ann. Volatility", "Ann. Sharpe Ratio"]
        for name in ("table2.csv", "allocations_Proposal.csv"):
            assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
        alloc = _rows(tmp_path / "x/allocations_GARCH.csv")
        assert alloc[0] == ["timestamp", "vol1", "vol2", "cov12", "w1", "portfolio_return"]
        assert all(-1 <= float(r[4]) <= 2 for r in alloc[1:])

    def test_report(self, workspace, tmp_path):
        assert run("report", "--fit", workspace / "fit_full", "--out", tmp_path) == 0
        assert len(_rows(tmp_path / "seasonal.csv")) == 1 + 288
        events = _rows(tmp_path / "events.csv")
        assert len(events) == 1 + 2 and len(events[0]) == 13
        level = dict(_rows(tmp_path / "level.csv")[1:])
        assert float(level["sigma_annualized"]) == pytest.approx(
            float(level["sigma_5min"]) * np.sqrt(model.ANNUALIZATION))


class TestExitCodes:
    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["estimate"])
        assert exc.value.code == 1

    def test_missing_file(self, tmp_path):
        assert run("estimate", "--returns", tmp_path / "nope.csv", "--variant", "SV",
                   "--out", tmp_path / "o") == 2

    def test_malformed_returns(self, tmp_path, capsys):
        (tmp_path / "r.csv").write_text("timestamp,return\n2024-01-01T00:00:00Z,x\n")
        assert run("estimate", "--returns", tmp_path / "r.csv", "--variant", "SV",
                   "--out", tmp_path / "o") == 2
        assert "line 2" in capsys.readouterr().err

    def test_non_stationary_truth(self, tmp_path):
        p = cli.default_truth(1, 1)
        p = model.ModelParams(-4.0, 1.0, 0.1, p.beta, p.alpha, p.pi)
        model.save_config(tmp_path / "c.json", p, extra={"T": 200, "n_events": 1, "n_lags": 1})
        assert run("simulate", "--config", tmp_path / "c.json", "--out", tmp_path / "o") == 1
