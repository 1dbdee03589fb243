"""Command-line entry point.

Subcommands: simulate, estimate, forecast, evaluate, backtest, report.
Numeric options come from built-in defaults, then ``--config`` (flat JSON),
then explicit flags.  Exit codes: 0 ok, 1 usage/config error, 2 data or IO
error, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import baselines, evaluation, market_data, mcmc, model, portfolio, report, storage
from .errors import ConfigError, DataError, DependencyError, IntradayVolError, NumericError
from .rng import make_rng

logger = logging.getLogger("intradayvol")

SCHEDULE_DEFAULTS = {"n_iter": 20_000, "burn_in": 10_000, "thin": 10, "seed": 0}
BASELINE_MODELS = {"garch": "GARCH", "gjr-garch": "GJR-GARCH", "ar1-rv": "AR1-RV", "har": "HAR"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser():
    p = _Parser(prog="intradayvol", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate returns from the model")
    s.add_argument("--T", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--config", help="flat JSON with model parameters")
    s.add_argument("--n-events", type=int, default=None)
    s.add_argument("--releases-per-event", type=int, default=None)
    s.add_argument("--n-lags", type=int, default=None)
    s.add_argument("--with-1min", action="store_true",
                   help="also write consistent 1-minute returns and 5-minute RV")
    s.add_argument("--out", required=True)

    e = sub.add_parser("estimate", help="run the Gibbs sampler")
    e.add_argument("--returns", required=True)
    e.add_argument("--calendar")
    e.add_argument("--variant", choices=[v.value for v in mcmc.Variant], default=None)
    e.add_argument("--config")
    for name in SCHEDULE_DEFAULTS:
        e.add_argument(f"--{name.replace('_', '-')}", type=int, default=None, dest=name)
    e.add_argument("--prior", type=_kv, action="append", default=[], metavar="KEY=VALUE",
                   help="prior override, e.g. gamma_b=19")
    e.add_argument("--split", type=float, default=None,
                   help="fraction of returns used for estimation (default 1)")
    e.add_argument("--n-lags", type=int, default=None)
    e.add_argument("--chains", type=int, default=1)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--no-stationary-term", action="store_true")
    e.add_argument("--out", required=True)

    f = sub.add_parser("forecast", help="one-step volatility forecasts on the hold-out")
    f.add_argument("--model", required=True, choices=["proposal"] + list(BASELINE_MODELS))
    f.add_argument("--returns", required=True)
    f.add_argument("--fit", help="estimate output directory (proposal)")
    f.add_argument("--calendar")
    f.add_argument("--rv", help="realized volatility CSV (AR1-RV, HAR)")
    f.add_argument("--split", type=float, default=None)
    f.add_argument("--no-mean-correction", action="store_true")
    f.add_argument("--tag")
    f.add_argument("--out", required=True, help="output CSV")

    v = sub.add_parser("evaluate", help="horse race and Diebold-Mariano table")
    v.add_argument("--rv", required=True)
    v.add_argument("--proposal", required=True)
    v.add_argument("--competitor", type=_kv, action="append", default=[], metavar="NAME=FILE")
    v.add_argument("--out", required=True)

    b = sub.add_parser("backtest", help="minimum variance portfolio backtest")
    b.add_argument("--returns1", required=True)
    b.add_argument("--returns2", required=True)
    b.add_argument("--corr", help="timestamp,corr CSV of per-window realized correlation")
    b.add_argument("--returns1-1min")
    b.add_argument("--returns2-1min")
    b.add_argument("--model", type=_kv, action="append", default=[], metavar="NAME=F1,F2")
    b.add_argument("--co-moment", choices=["covariance", "literal"], default="covariance")
    b.add_argument("--out", required=True)

    r = sub.add_parser("report", help="seasonal, level and event summaries of a fit")
    r.add_argument("--fit", required=True)
    r.add_argument("--volume", help="bin,volume CSV of average traded volume")
    r.add_argument("--out", required=True)
    return p


# ------------------------------------------------------------------ helpers


def _merge(defaults, config, flags):
    out = dict(defaults)
    for k in defaults:
        if k in config:
            out[k] = config[k]
        if flags.get(k) is not None:
            out[k] = flags[k]
    return out


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _require(path, what):
    if not path or not os.path.exists(path):
        raise DependencyError(f"missing input for {what}: {path}")
    return path


def _write_series(path, timestamps, values, name):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"timestamp,{name}\n")
        for t, v in zip(timestamps, values):
            fh.write(f"{market_data.format_timestamp(t)},{float(v)!r}\n")


def _read_series(path):
    s = market_data.load_returns(path)
    return s.timestamps, s.values


def _split_index(n, split):
    split = 1.0 if split is None else split
    if not 0 < split <= 1:
        raise ConfigError(f"split must lie in (0, 1], got {split}")
    return max(2, int(round(n * split)))


# ----------------------------------------------------------------- simulate


def default_truth(n_events, n_lags):
    M = n_events * n_lags
    alpha = np.zeros(M)
    pi = np.zeros(M, dtype=np.int8)
    for ev in range(0, n_events, 2):
        for lag, a in enumerate((2.0, 1.0)[:n_lags]):
            alpha[ev * n_lags + lag] = a
            pi[ev * n_lags + lag] = 1
    return model.ModelParams(-6.0, 0.98, 0.0225, model.sinusoidal_beta(0.5), alpha, pi, 0.1, 1.0)


def synthetic_calendar(grid, n_events, releases_per_event, rng):
    """Releases two minutes before randomly chosen grid points."""
    entries = []
    for ev in range(n_events):
        idx = np.sort(rng.choice(grid.size, size=min(releases_per_event, grid.size), replace=False))
        for i in idx:
            entries.append(market_data.CalendarEntry(
                f"E{ev:03d}", f"Event {ev}", "XX", grid[i] - np.timedelta64(120, "s")))
    entries.sort(key=lambda e: e.release)
    return market_data.EventCalendar(tuple(entries))


def cmd_simulate(args):
    defaults = {"T": 10_000, "seed": 0, "n_events": 4, "releases_per_event": 20, "n_lags": 6}
    params, _, rest = model.load_config(args.config) if args.config else (None, None, {})
    cfg = _merge(defaults, rest, vars(args))
    os.makedirs(args.out, exist_ok=True)
    T = cfg["T"]
    grid = model.synthetic_grid(T)
    rng_cal, rng_sim, rng_sub = (make_rng(np.random.SeedSequence(cfg["seed"], spawn_key=(k,)))
                                 for k in range(3))
    cal = synthetic_calendar(grid, cfg["n_events"], cfg["releases_per_event"], rng_cal)
    design = market_data.align_events(cal, grid, cfg["n_lags"])
    if params is None:
        params = default_truth(cfg["n_events"], cfg["n_lags"])
    if params.alpha.size != design.n_cols:
        raise ConfigError(f"params have {params.alpha.size} event coefficients, design {design.n_cols}")
    params.validate()
    y, x = model.simulate(params, design, T, rng_sim, timestamps=grid)
    market_data.write_returns(y, os.path.join(args.out, "returns.csv"))
    _write_series(os.path.join(args.out, "latent.csv"), grid, x.x, "x")
    market_data.write_calendar(cal, os.path.join(args.out, "calendar.csv"))
    model.save_config(os.path.join(args.out, "truth.json"), params)
    if args.with_1min:
        h = params.mu_h + x.x + params.beta[market_data.seasonal_bins(grid)] + design.row_sum(params.alpha)
        fine = model.split_returns(y, np.exp(h / 2), 5, rng_sub)
        market_data.write_returns(fine, os.path.join(args.out, "returns_1min.csv"))
        rv = market_data.compute_realized_volatility(fine)
        _write_series(os.path.join(args.out, "rv.csv"), rv.timestamps, rv.values, "rv")
    inputs = {"config": args.config} if args.config else {}
    storage.write_manifest(os.path.join(args.out, "manifest_simulate.json"),
                           {"command": "simulate", **cfg}, inputs)
    return 0


# ----------------------------------------------------------------- estimate


def _run_one(job):
    returns, design, prior, schedule, variant, stationary = job
    return mcmc.run_chain(returns, design, prior, schedule, variant, stationary_term=stationary,
                          log_every=max(schedule.n_iter // 10, 1))


def cmd_estimate(args):
    cfg_params, cfg_prior, rest = (model.load_config(args.config) if args.config
                                   else (None, model.PriorConfig(), {}))
    sched = _merge(SCHEDULE_DEFAULTS, rest, vars(args))
    variant = mcmc.Variant(args.variant or rest.get("variant", "FULL"))
    split = args.split if args.split is not None else rest.get("split", 1.0)
    n_lags = args.n_lags or rest.get("n_lags", 6)
    prior_d = cfg_prior.to_dict()
    for k, v in args.prior:
        prior_d[k if k.startswith("prior.") else f"prior.{k}"] = float(v)
    prior = model.PriorConfig.from_dict(prior_d)

    returns = market_data.load_returns(args.returns)
    n_est = _split_index(len(returns), split)
    est = returns.slice(0, n_est)
    design = None
    inputs = {"returns": args.returns}
    if variant == mcmc.Variant.FULL:
        _require(args.calendar, "FULL variant (--calendar)")
        inputs["calendar"] = args.calendar
        cal = market_data.load_calendar(args.calendar)
        design = market_data.align_events(cal, returns.timestamps, n_lags).slice_rows(0, n_est)

    os.makedirs(args.out, exist_ok=True)
    seeds = (np.random.SeedSequence(sched["seed"]).spawn(args.chains) if args.chains > 1
             else [sched["seed"]])
    jobs = [(est, design, prior,
             mcmc.Schedule(sched["n_iter"], sched["burn_in"], sched["thin"], s),
             variant, not args.no_stationary_term) for s in seeds]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            chains = list(pool.map(_run_one, jobs))
    else:
        chains = [_run_one(j) for j in jobs]
    draws = chains[0] if len(chains) == 1 else mcmc.merge_draws(chains)

    storage.write_draws(draws, os.path.join(args.out, "draws.csv"))
    report.write_summary(draws, os.path.join(args.out, "summary.csv"), n_lags)
    _write_series(os.path.join(args.out, "latent_mean.csv"), est.timestamps, draws.x_mean, "x_mean")
    config = {"command": "estimate", "variant": variant.value, "split": split, "n_est": n_est,
              "n_lags": n_lags, "chains": args.chains, "schedule": sched,
              "stationary_term": not args.no_stationary_term, **prior.to_dict()}
    storage.write_manifest(os.path.join(args.out, "manifest.json"), config, inputs)
    return 0


def load_fit(fit_dir):
    manifest = storage.read_manifest(_require(os.path.join(fit_dir, "manifest.json"), fit_dir))
    variant = manifest["config"]["variant"]
    draws = storage.read_draws(_require(os.path.join(fit_dir, "draws.csv"), fit_dir), variant)
    latent = os.path.join(fit_dir, "latent_mean.csv")
    if os.path.exists(latent):
        draws.x_mean = _read_series(latent)[1]
    return manifest, draws


# ----------------------------------------------------------------- forecast


def cmd_forecast(args):
    returns = market_data.load_returns(args.returns)
    if args.model == "proposal":
        manifest, draws = load_fit(_require(args.fit, "proposal (--fit)"))
        cfg = manifest["config"]
        split = args.split if args.split is not None else cfg.get("split", 1.0)
        design = None
        if draws.variant == mcmc.Variant.FULL:
            cal = market_data.load_calendar(_require(args.calendar, "proposal (--calendar)"))
            design = market_data.align_events(cal, returns.timestamps, cfg.get("n_lags", 6))
        fc = evaluation.forecast_proposal(draws, returns, design,
                                          mean_correction=not args.no_mean_correction)
        ts, vals = fc.timestamps, fc.values
    else:
        name = BASELINE_MODELS[args.model]
        split = 1.0 if args.split is None else args.split
        if name in ("GARCH", "GJR-GARCH"):
            n_est = _split_index(len(returns), split)
            fitter = baselines.fit_garch11 if name == "GARCH" else baselines.fit_gjr_garch
            fit = fitter(returns.values[:n_est])
            ts, vals = returns.timestamps, fit.forecast(returns.values)
        else:
            rv_ts, rv = _read_series(_require(args.rv, f"{name} (--rv)"))
            cut = returns.timestamps[_split_index(len(returns), split) - 1]
            n_est = int(np.searchsorted(rv_ts, cut, side="right"))
            fit = (baselines.fit_ar1_rv if name == "AR1-RV" else baselines.fit_har)(rv[:n_est])
            ts, vals = rv_ts, fit.forecast(rv)
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(os.path.splitext(args.out)[0] + ".fit.json", "w", encoding="utf-8") as fh:
            fh.write(fit.to_json() + "\n")
    n_est = _split_index(len(returns), split)
    start = returns.timestamps[n_est] if n_est < len(returns) else returns.timestamps[-1]
    keep = (ts >= start) & np.isfinite(vals) if split < 1 else np.isfinite(vals)
    _write_series(args.out, ts[keep], vals[keep], args.tag or args.model)
    return 0


# ----------------------------------------------------------------- evaluate


def _load_forecast(path, name):
    ts, vals = _read_series(_require(path, name))
    return evaluation.ForecastSeries(ts, vals, name)


def cmd_evaluate(args):
    rv_ts, rv = _read_series(_require(args.rv, "realized volatility"))
    rvs = market_data.RVSeries(rv_ts, rv)
    prop = _load_forecast(args.proposal, "Proposal")
    if not args.competitor:
        raise ConfigError("at least one --competitor NAME=FILE is required")
    comps = {name: _load_forecast(path, name) for name, path in args.competitor}
    results = evaluation.evaluate_competitors(rvs, prop, comps)
    os.makedirs(args.out, exist_ok=True)
    evaluation.write_table1(results, os.path.join(args.out, "table1.csv"))
    inputs = {"rv": args.rv, "proposal": args.proposal, **dict(args.competitor)}
    storage.write_manifest(os.path.join(args.out, "manifest_evaluate.json"),
                           {"command": "evaluate", "competitors": [n for n, _ in args.competitor]},
                           inputs)
    return 0


# ----------------------------------------------------------------- backtest


def cmd_backtest(args):
    r1 = market_data.load_returns(_require(args.returns1, "asset 1 returns"))
    r2 = market_data.load_returns(_require(args.returns2, "asset 2 returns"))
    if args.corr:
        c_ts, c = _read_series(_require(args.corr, "correlation"))
    elif args.returns1_1min and args.returns2_1min:
        a = market_data.load_returns(args.returns1_1min)
        b = market_data.load_returns(args.returns2_1min)
        c_ts, c = market_data.realized_correlation_series(a, b)
    else:
        raise ConfigError("need --corr or both --returns1-1min and --returns2-1min")
    if not args.model:
        raise ConfigError("at least one --model NAME=F1,F2 is required")
    corr = evaluation.ForecastSeries(c_ts, c, "corr")
    os.makedirs(args.out, exist_ok=True)
    stats_by_model = {}
    inputs = {"returns1": args.returns1, "returns2": args.returns2}
    for name, pair in args.model:
        try:
            p1, p2 = pair.split(",")
        except ValueError:
            raise ConfigError(f"--model {name}: expected two comma-separated files") from None
        f1 = _load_forecast(p1, f"{name} (asset 1)")
        f2 = _load_forecast(p2, f"{name} (asset 2)")
        inputs[f"{name}_1"], inputs[f"{name}_2"] = p1, p2
        ts, (a1, a2, v1, v2) = evaluation.align(r1, r2, f1, f2)
        rho = np.zeros(ts.size)
        idx = np.searchsorted(corr.timestamps, ts)
        hit = (idx < corr.timestamps.size) & (corr.timestamps[np.minimum(idx, corr.timestamps.size - 1)] == ts)
        rho[hit] = corr.values[idx[hit]]
        res = portfolio.backtest(a1, a2, v1, v2, rho, co_moment=args.co_moment)
        res = portfolio.BacktestResult(ts, *[getattr(res, k) for k in
                                             ("vol1", "vol2", "cov12", "w1", "returns", "stats",
                                              "n_clamped")])
        res.write_csv(os.path.join(args.out, f"allocations_{name}.csv"))
        stats_by_model[name] = res.stats
    portfolio.write_table2(stats_by_model, os.path.join(args.out, "table2.csv"))
    storage.write_manifest(os.path.join(args.out, "manifest_backtest.json"),
                           {"command": "backtest", "co_moment": args.co_moment,
                            "models": [n for n, _ in args.model]}, inputs)
    return 0


# ------------------------------------------------------------------- report


def cmd_report(args):
    manifest, draws = load_fit(args.fit)
    os.makedirs(args.out, exist_ok=True)
    sigma, sigma_ann = report.level_effect(draws)
    with open(os.path.join(args.out, "level.csv"), "w", encoding="utf-8") as fh:
        fh.write("quantity,value\n")
        fh.write(f"sigma_5min,{sigma!r}\nsigma_annualized,{sigma_ann!r}\n")
    if draws.x_mean is not None:
        path = report.level_sv_path(draws)
        with open(os.path.join(args.out, "level_sv.csv"), "w", encoding="utf-8") as fh:
            fh.write("t,sigma_X\n")
            for t, v in enumerate(path):
                fh.write(f"{t},{float(v)!r}\n")
    if draws.variant != mcmc.Variant.SV:
        mean, lo, hi = report.seasonal_effect(draws)
        with open(os.path.join(args.out, "seasonal.csv"), "w", encoding="utf-8") as fh:
            fh.write("bin,time,effect,lo90,hi90\n")
            for k in range(mean.size):
                fh.write(f"{k},{k * 5 // 60:02d}:{k * 5 % 60:02d},{float(mean[k])!r},{float(lo[k])!r},{float(hi[k])!r}\n")
        if args.volume:
            vol = np.loadtxt(_require(args.volume, "volume"), delimiter=",", skiprows=1)
            by_bin = np.full(mean.size, np.nan)
            by_bin[vol[:, 0].astype(int)] = vol[:, 1]
            ok = np.isfinite(by_bin)
            b0, b1, r2 = report.volume_regression(by_bin[ok], mean[ok])
            with open(os.path.join(args.out, "volume_regression.csv"), "w", encoding="utf-8") as fh:
                fh.write(f"intercept,slope,r2\n{b0!r},{b1!r},{r2!r}\n")
    if draws.variant == mcmc.Variant.FULL:
        n_lags = manifest["config"].get("n_lags", 6)
        with open(os.path.join(args.out, "events.csv"), "w", encoding="utf-8") as fh:
            fh.write("event," + ",".join(f"pi_{5 * (k + 1)}min" for k in range(n_lags)) + ","
                     + ",".join(f"effect_{5 * (k + 1)}min" for k in range(n_lags)) + "\n")
            for eid, pis, effs in report.event_table(draws, n_lags):
                fh.write(eid + "," + ",".join(f"{v:.4f}" for v in pis + effs) + "\n")
    return 0


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "forecast": cmd_forecast,
            "evaluate": cmd_evaluate, "backtest": cmd_backtest, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except IntradayVolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
