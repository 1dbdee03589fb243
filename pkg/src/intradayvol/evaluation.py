"""One-step volatility forecasts and the forecast comparison battery."""

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _kernels
from .errors import AlignmentError, DataError, DegenerateError
from .market_data import seasonal_bins
from .mcmc import KSC_TABLE, LINEARIZE_OFFSET, Variant, linearize


@dataclass(frozen=True)
class ForecastSeries:
    timestamps: np.ndarray
    values: np.ndarray
    model: str

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise AlignmentError("timestamps and values differ in length")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class HorseRaceResult:
    b0: float
    b1: float
    t_stat: float
    n_obs: int
    b1_unclamped: float
    std_error: float
    clamped: bool


@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float
    loss: str
    hac_lags: int
    kernel: str


# ----------------------------------------------------------------- forecasts


def forecast_proposal(draws, returns, design=None, *, mean_correction=True,
                      table=KSC_TABLE, offset=LINEARIZE_OFFSET, model=None):
    """One-step-ahead volatility of every return in ``returns``.

    Parameters sit at their posterior means.  The persistent component is
    tracked by a Kalman filter on the linearised returns whose mixture noise
    is collapsed to one Gaussian each step; the forecast for ``t`` uses
    returns before ``t`` plus the (scheduled) event indicators at ``t``.
    With ``mean_correction`` the plug-in ``exp(h/2)`` is multiplied by
    ``exp(P/8)``, the lognormal mean over the predictive variance ``P`` of x.
    """
    pm = draws.posterior_means()
    y = np.asarray(returns.values, float)
    T = y.size
    c = np.full(T, pm["mu_h"])
    if draws.variant != Variant.SV:
        c += pm["beta"][seasonal_bins(returns.timestamps)]
    if draws.variant == Variant.FULL:
        if design is None or design.n_rows != T:
            raise AlignmentError(
                f"event design has {getattr(design, 'n_rows', 0)} rows for {T} returns")
        c += design.row_sum(pm["alpha"])
    z = np.ascontiguousarray(linearize(y, offset) - c)
    a, P = _kernels.mixture_filter(z, pm["phi"], pm["sigma_x2"], table.q, table.m, table.v)
    a, P = a[:T], P[:T]
    vol = np.exp((c + a) / 2)
    if mean_correction:
        vol *= np.exp(P / 8)
    return ForecastSeries(np.asarray(returns.timestamps), vol,
                          model or {"FULL": "Proposal"}.get(draws.variant.value, draws.variant.value))


def align(*series):
    """Restrict series (objects with ``timestamps``/``values``) to common,
    finite timestamps.  Returns ``(timestamps, [values...])``."""
    common = series[0].timestamps
    for s in series[1:]:
        common = np.intersect1d(common, s.timestamps)
    out = []
    for s in series:
        idx = np.searchsorted(s.timestamps, common)
        out.append(np.asarray(s.values, float)[idx])
    ok = np.all([np.isfinite(v) for v in out], axis=0)
    return common[ok], [v[ok] for v in out]


# ---------------------------------------------------------------------- HAC


def bartlett_lags(n):
    return int(np.floor(n ** (1 / 3)))


def long_run_variance(u, lags, kernel="bartlett"):
    """Long-run variance of a mean-zero series with Bartlett or truncated weights."""
    u = np.asarray(u, float)
    n = u.size
    lrv = np.dot(u, u) / n
    for k in range(1, lags + 1):
        w = 1 - k / (lags + 1) if kernel == "bartlett" else 1.0
        lrv += 2 * w * np.dot(u[k:], u[:-k]) / n
    return lrv


def hac_cov(X, resid, lags):
    """Newey-West covariance of OLS coefficients."""
    X = np.asarray(X, float)
    n = X.shape[0]
    xu = X * np.asarray(resid, float)[:, None]
    S = xu.T @ xu / n
    for k in range(1, lags + 1):
        w = 1 - k / (lags + 1)
        G = xu[k:].T @ xu[:-k] / n
        S += w * (G + G.T)
    bread = np.linalg.inv(X.T @ X / n)
    return bread @ S @ bread / n


# ----------------------------------------------------------------- horse race


def horse_race(rv, proposal, competitor, hac_lags=None):
    """Constrained encompassing regression ``RV = b0 + b1 P + (1 - b1) C``.

    Estimated as OLS of ``RV - C`` on ``(1, P - C)``; ``b1`` is clamped to
    ``[0, 1]`` and the t-statistic uses the unclamped estimate with a
    Newey-West standard error.
    """
    rv, p, c = (np.asarray(getattr(s, "values", s), float) for s in (rv, proposal, competitor))
    if not (rv.size == p.size == c.size):
        raise AlignmentError("series differ in length")
    n = rv.size
    if n < 30:
        raise DataError(f"horse race needs at least 30 observations, got {n}")
    diff = p - c
    if np.ptp(diff) <= 1e-12 * max(1.0, np.abs(p).max()):
        raise DegenerateError("proposal and competitor forecasts do not differ")
    X = np.column_stack([np.ones(n), diff])
    coef, *_ = np.linalg.lstsq(X, rv - c, rcond=None)
    resid = rv - c - X @ coef
    lags = bartlett_lags(n) if hac_lags is None else hac_lags
    se = float(np.sqrt(max(hac_cov(X, resid, lags)[1, 1], 0.0)))
    b1 = float(np.clip(coef[1], 0.0, 1.0))
    if se > 0:
        t = float(coef[1] / se)
    else:
        t = float(np.copysign(np.inf, coef[1]))
    return HorseRaceResult(float(coef[0]), b1, t, n, float(coef[1]), se, b1 != coef[1])


# -------------------------------------------------------------- Diebold-Mariano


def _loss(e, loss):
    e = np.asarray(e, float)
    if loss == "squared":
        return e * e
    if loss == "absolute":
        return np.abs(e)
    raise ValueError(f"unknown loss {loss!r}")


def dm_test(d, h=1, hac_lags=None, fallback_lags=5):
    """One-sided DM test on a loss differential ``d = L_comp - L_prop``.

    Variance uses the truncated kernel at ``h - 1`` lags (the MA order of an
    optimal h-step forecast error); if that estimate is not positive the
    Bartlett kernel with ``fallback_lags`` is used.  Returns
    ``(statistic, p_value, lags, kernel)`` with ``p = 1 - Phi(DM)``.
    """
    d = np.asarray(d, float)
    n = d.size
    if n < 30:
        raise DataError(f"DM test needs at least 30 observations, got {n}")
    u = d - d.mean()
    lags = h - 1 if hac_lags is None else hac_lags
    kernel = "truncated"
    lrv = long_run_variance(u, lags, "truncated")
    if not lrv > 0 and np.dot(u, u) > 0:
        lags, kernel = fallback_lags, "bartlett"
        lrv = long_run_variance(u, lags, "bartlett")
    if not lrv > 0:
        raise DegenerateError("loss differential has zero variance")
    stat = d.mean() / np.sqrt(lrv / n)
    return float(stat), float(stats.norm.sf(stat)), lags, kernel


def diebold_mariano(e_prop, e_comp, h=1, loss="squared", hac_lags=None):
    """H0 equal accuracy vs H1 the competitor is less accurate.

    ``e_prop`` and ``e_comp`` are forecast errors (forecast minus realized
    volatility) of the proposal and competitor.
    """
    e_prop = np.asarray(e_prop, float)
    e_comp = np.asarray(e_comp, float)
    if e_prop.shape != e_comp.shape:
        raise AlignmentError("error series differ in length")
    d = _loss(e_comp, loss) - _loss(e_prop, loss)
    stat, p, lags, kernel = dm_test(d, h, hac_lags)
    return DMResult(stat, p, loss, lags, kernel)


# -------------------------------------------------------------------- reports


def evaluate_competitors(rv, proposal, competitors):
    """Horse race and DM test of ``proposal`` against each competitor.

    ``competitors`` maps a model name to a :class:`ForecastSeries`; all
    series are aligned on common timestamps per comparison.
    """
    results = {}
    for name, comp in competitors.items():
        _, (r, p, c) = align(rv, proposal, comp)
        hr = horse_race(r, p, c)
        dm = diebold_mariano(p - r, c - r)
        results[name] = (hr, dm)
    return results


def write_table1(results, path):
    names = list(results)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + names)
        w.writerow(["b1"] + [f"{results[n][0].b1:.2f}" for n in names])
        w.writerow(["t-stat"] + [f"{results[n][0].t_stat:.2f}" for n in names])
        w.writerow(["DM p-value"] + [f"{results[n][1].p_value:.2f}" for n in names])
        fh.write("# b1 from OLS of RV-C on (1, P-C), clamped to [0,1]; t-stat uses the "
                 "unclamped b1 with Newey-West (Bartlett, floor(n^(1/3)) lags) errors. "
                 "DM: squared volatility error, one-sided.\n")
