"""End-to-end acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line shown in the terminal summary.
"""

import time

import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import make_design
from intradayvol import baselines as bl
from intradayvol import cli, evaluation, mcmc, portfolio
from intradayvol.market_data import seasonal_bins
from intradayvol.model import ModelParams, annualize, simulate, sinusoidal_beta, synthetic_grid
from intradayvol.rng import make_rng
from test_mcmc import _kalman_smoother
from test_portfolio import grid_minimizer, random_inputs


def _check(record, number, title, checks):
    """``checks`` maps a description to ``(passed, detail)``."""
    passed = all(ok for ok, _ in checks.values())
    detail = "; ".join(f"{k}={v}" for k, (_, v) in checks.items())
    record(number, title, passed, f"[{detail}]")
    failed = [k for k, (ok, _) in checks.items() if not ok]
    assert not failed, f"criterion {number} failed: {failed} ({detail})"


@pytest.mark.slow
def test_01_posterior_recovery(record_acceptance):
    T, n_events, n_lags = 50_000, 20, 6
    design = make_design(T, n_events, n_lags, 40, seed=11)
    M = design.n_cols
    rng = make_rng(12)
    active = np.sort(rng.choice(M, 10, replace=False))
    alpha = np.zeros(M)
    pi = np.zeros(M, dtype=np.int8)
    alpha[active] = rng.uniform(1.5, 3.0, 10)
    pi[active] = 1
    truth = ModelParams(-6.0, 0.98, 0.15**2, sinusoidal_beta(0.5), alpha, pi)
    truth.validate()
    ret, _ = simulate(truth, design, T, seed=13, timestamps=synthetic_grid(T))

    t0 = time.perf_counter()
    d = mcmc.run_chain(ret, design, schedule=mcmc.Schedule(2000, 1000, 1, seed=14))
    elapsed = time.perf_counter() - t0

    mean_pi = d.pi.mean(axis=0)
    inactive = np.setdiff1d(np.arange(M), active)

    def inside(draws, value):
        lo, hi = np.quantile(draws, [0.025, 0.975])
        return bool(lo <= value <= hi), f"[{lo:.4f},{hi:.4f}]"

    beta_corr = np.corrcoef(d.beta.mean(axis=0), truth.beta)[0, 1]
    checks = {
        "active_min_pi": (mean_pi[active].min() > 0.9, f"{mean_pi[active].min():.3f}"),
        "inactive_mean_pi": (mean_pi[inactive].mean() < 0.15, f"{mean_pi[inactive].mean():.3f}"),
        "mu_h_ci": inside(d.mu_h, truth.mu_h),
        "phi_ci": inside(d.phi, truth.phi),
        "sigma_x_ci": inside(np.sqrt(d.sigma_x2), 0.15),
        "beta_corr": (beta_corr > 0.95, f"{beta_corr:.4f}"),
        "runtime_s": (elapsed <= 15 * 60, f"{elapsed:.0f}"),
    }
    _check(record_acceptance, 1, "posterior recovery (T=50k, M=120)", checks)


def test_02_gibbs_step_oracles(record_acceptance):
    errs = {
        "phi": oracles.phi_oracle(),
        "sigma_x2": oracles.sigma_x2_oracle(),
        "sigma_x2_no_x1": oracles.sigma_x2_oracle(stationary_term=False),
        "bins": oracles.bin_oracle(),
        "gamma": oracles.gamma_oracle(),
        "sigma_alpha2": oracles.sigma_alpha2_oracle(),
        "alpha": oracles.alpha_oracle(),
    }
    checks = {k: (v < 1e-6, f"{v:.1e}") for k, v in errs.items()}
    incl = max(abs(a - b) for a, b in (oracles.inclusion_oracle(effect=e) for e in (0.0, 0.5, 1.5)))
    checks["inclusion"] = (incl < 1e-6, f"{incl:.1e}")
    m, v = mcmc.alpha_conditional(np.zeros(0), np.zeros(0), 1.3)
    gap = abs(mcmc.inclusion_probability(m, v, 0.07, 1.3) - 0.07)
    checks["unobserved_column"] = (gap < 1e-10, f"{gap:.1e}")
    _check(record_acceptance, 2, "Gibbs-step oracles", checks)


def test_03_ffbs_exactness(record_acceptance):
    z = np.array([-0.4, 1.2, 0.1, -2.0, 0.7])
    obs_var = mcmc.KSC_TABLE.v[[5, 4, 6, 1, 3]]
    phi, s2 = 0.9, 0.3
    mean, cov = _kalman_smoother(z, obs_var, phi, s2)
    rng = make_rng(21)
    n = 100_000
    draws = np.array([mcmc.step_latent_x(z, obs_var, phi, s2, rng) for _ in range(n)])
    z_mean = np.abs(draws.mean(0) - mean) / np.sqrt(np.diag(cov) / n)
    se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
    z_cov = np.abs(np.cov(draws.T) - cov) / se_cov
    checks = {"mean_max_z": (z_mean.max() < 3, f"{z_mean.max():.2f}"),
              "cov_max_z": (z_cov.max() < 3, f"{z_cov.max():.2f}")}
    _check(record_acceptance, 3, "FFBS exactness (T=5, 1e5 draws)", checks)


def test_04_mixture_sanity(record_acceptance):
    t = mcmc.KSC_TABLE
    checks = {"sum_q": (abs(t.q.sum() - 1) < 1e-10, f"{t.q.sum():.12f}"),
              "mean": (abs(t.mean + 1.2704) < 1e-2, f"{t.mean:.4f}"),
              "variance": (abs(t.variance - np.pi**2 / 2) < 1e-2, f"{t.variance:.4f}")}
    _check(record_acceptance, 4, "mixture sanity", checks)


def test_05_annualization_anchor(record_acceptance):
    v = annualize(0.046)
    _check(record_acceptance, 5, "annualization anchor", {"annualize(0.046)": (12.0 <= v <= 12.6, f"{v:.3f}")})


def test_06_horse_race_recovery(record_acceptance):
    rng = make_rng(31)
    n = 10_000
    C = 1 + 0.3 * rng.standard_normal(n)
    P = 1 + 0.3 * rng.standard_normal(n)
    mix = evaluation.horse_race(0.3 * P + 0.7 * C + 0.1 * rng.standard_normal(n), P, C)
    exact = evaluation.horse_race(P, P, C)
    reported = [evaluation.horse_race(a * P + (1 - a) * C + 0.1 * rng.standard_normal(n), P, C).b1
                for a in (-0.5, 0.0, 0.5, 1.0, 1.5)]
    checks = {
        "b1_within_2se": (abs(mix.b1 - 0.3) < 2 * mix.std_error, f"{mix.b1:.4f}+-{mix.std_error:.4f}"),
        "exact_fit_b1": (f"{exact.b1:.2f}" == "1.00", f"{exact.b1:.2f}"),
        "b1_in_unit_interval": (all(0 <= b <= 1 for b in reported + [mix.b1, exact.b1]),
                                ",".join(f"{b:.2f}" for b in reported)),
    }
    _check(record_acceptance, 6, "horse-race recovery", checks)


@pytest.mark.slow
def test_07_dm_size_and_power(record_acceptance):
    rng = make_rng(41)
    n, reps = 10_000, 1000
    rejections = 0
    for _ in range(reps):
        e_prop, e_comp = rng.standard_normal(n), rng.standard_normal(n)
        rejections += evaluation.diebold_mariano(e_prop, e_comp).p_value < 0.05
    size = rejections / reps
    power_reps = 1000
    hits = 0
    for _ in range(power_reps):
        # loss differential with mean 0.1 of its standard deviation
        d = 0.1 + rng.standard_normal(n)
        hits += evaluation.dm_test(d)[1] < 0.05
    power = hits / power_reps
    checks = {"size": (0.03 <= size <= 0.07, f"{size:.3f}"), "power": (power > 0.99, f"{power:.3f}")}
    _check(record_acceptance, 7, "DM size and power", checks)


def test_08_gmvp_correctness(record_acceptance):
    v1, v2, c = random_inputs(10_000, 51)
    worst, n_edge = 0.0, 0
    for lo in range(0, v1.size, 500):
        sl = slice(lo, lo + 500)
        w_grid, edge = grid_minimizer(v1[sl], v2[sl], c[sl])
        w = portfolio.gmvp_weight(v1[sl], v2[sl], c[sl], clamp=False)
        n_edge += int(edge.sum())
        if (~edge).any():
            worst = max(worst, float(np.abs(w - w_grid)[~edge].max()))
    sym = portfolio.gmvp_weight(1.3, 1.3, 0.0)
    sharpe = 8.47 / 10.50
    checks = {
        "grid_max_err": (worst < 1e-5 and n_edge < 100, f"{worst:.1e} ({n_edge} off-grid)"),
        "symmetric": (sym == 0.5, repr(sym)),
        "sharpe": (f"{sharpe:.2f}" == "0.81", f"{sharpe:.4f}"),
    }
    z = make_rng(52).standard_normal(5000)
    z = (z - z.mean()) / z.std(ddof=1)
    s = portfolio.portfolio_stats(8.47 / 72576 + 10.50 / np.sqrt(72576) * z)
    checks["stats_sharpe"] = (f"{s.ann_sharpe:.2f}" == "0.81", f"{s.ann_sharpe:.4f}")
    _check(record_acceptance, 8, "GMVP correctness", checks)


@pytest.mark.slow
def test_09_baseline_consistency(record_acceptance):
    g_true = np.array([0.05, 0.05, 0.90])
    garch = bl.fit_garch11(bl.simulate_garch(100_000, *g_true, seed=61))
    j_true = np.array([0.05, 0.03, 0.90, 0.08])
    gjr = bl.fit_gjr_garch(bl.simulate_garch(100_000, *j_true[:3], g=j_true[3], seed=62))

    rv = np.abs(make_rng(63).standard_normal(20_000)) * 0.05 + 0.01
    har = bl.fit_har(rv)
    X, t = bl.har_regressors(rv)
    har_oracle = np.linalg.solve(X.T @ X, X.T @ rv[t])
    ar1 = bl.fit_ar1_rv(rv)
    Xa = np.column_stack([np.ones(rv.size - 1), rv[:-1]])
    ar1_oracle = np.linalg.solve(Xa.T @ Xa, Xa.T @ rv[1:])
    g_err = np.abs(garch.params - g_true).max()
    j_err = np.abs(gjr.params - j_true).max()
    h_err = np.abs(har.params - har_oracle).max()
    a_err = np.abs(ar1.params - ar1_oracle).max()
    checks = {
        "garch_max_err": (g_err < 0.02, f"{g_err:.4f}"),
        "gjr_max_err": (j_err < 0.02, f"{j_err:.4f}"),
        "har_vs_oracle": (h_err < 1e-8, f"{h_err:.1e}"),
        "ar1_vs_oracle": (a_err < 1e-8, f"{a_err:.1e}"),
    }
    _check(record_acceptance, 9, "baseline consistency", checks)


def test_10_determinism(record_acceptance, tmp_path):
    def run(*argv):
        assert cli.main([str(a) for a in argv]) == 0

    for asset, seed in (("a", 71), ("b", 72)):
        run("simulate", "--T", 1200, "--seed", seed, "--n-events", 2, "--releases-per-event", 8,
            "--with-1min", "--out", tmp_path / asset)
    same = {}
    for k in ("x", "y"):
        out = tmp_path / k
        run("estimate", "--returns", tmp_path / "a/returns.csv", "--calendar", tmp_path / "a/calendar.csv",
            "--n-iter", 60, "--burn-in", 20, "--thin", 2, "--seed", 5, "--split", 0.75, "--out", out / "fit")
        run("estimate", "--returns", tmp_path / "b/returns.csv", "--variant", "SSV",
            "--n-iter", 60, "--burn-in", 20, "--thin", 2, "--seed", 5, "--split", 0.75, "--out", out / "fit_b")
        run("forecast", "--model", "proposal", "--fit", out / "fit", "--returns", tmp_path / "a/returns.csv",
            "--calendar", tmp_path / "a/calendar.csv", "--out", out / "pa.csv")
        run("forecast", "--model", "proposal", "--fit", out / "fit_b", "--returns", tmp_path / "b/returns.csv",
            "--out", out / "pb.csv")
        run("backtest", "--returns1", tmp_path / "a/returns.csv", "--returns2", tmp_path / "b/returns.csv",
            "--returns1-1min", tmp_path / "a/returns_1min.csv", "--returns2-1min", tmp_path / "b/returns_1min.csv",
            "--model", f"Proposal={out / 'pa.csv'},{out / 'pb.csv'}", "--out", out / "bt")
        same[k] = [(out / p).read_bytes() for p in
                   ("fit/draws.csv", "fit_b/draws.csv", "bt/table2.csv", "bt/allocations_Proposal.csv")]
    identical = same["x"] == same["y"]
    checks = {"draws_and_backtest_bitwise": (identical, "identical" if identical else "differ")}
    _check(record_acceptance, 10, "determinism", checks)
