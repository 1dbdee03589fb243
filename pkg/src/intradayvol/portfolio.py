"""Two-asset global minimum variance backtest."""

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AlignmentError, SingularityError
from .market_data import format_timestamp
from .model import ANNUALIZATION

W_MIN, W_MAX = -1.0, 2.0


class AllocationStep(NamedTuple):
    timestamp: np.datetime64
    vol1: float
    vol2: float
    cov12: float
    w1: float
    portfolio_return: float


@dataclass(frozen=True)
class PortfolioStats:
    ann_mean: float
    ann_vol: float
    ann_sharpe: float
    sharpe_defined: bool = True


@dataclass(frozen=True)
class BacktestResult:
    timestamps: np.ndarray
    vol1: np.ndarray
    vol2: np.ndarray
    cov12: np.ndarray
    w1: np.ndarray
    returns: np.ndarray
    stats: PortfolioStats
    n_clamped: int = 0

    def steps(self):
        for i in range(self.w1.size):
            yield AllocationStep(self.timestamps[i], float(self.vol1[i]), float(self.vol2[i]),
                                 float(self.cov12[i]), float(self.w1[i]), float(self.returns[i]))

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(AllocationStep._fields)
            dated = np.issubdtype(np.asarray(self.timestamps).dtype, np.datetime64)
            for s in self.steps():
                stamp = format_timestamp(s.timestamp) if dated else int(s.timestamp)
                w.writerow([stamp] + [repr(float(v)) for v in s[1:]])


def gmvp_weight(vol1, vol2, cov12, clamp=True):
    """Weight of asset 1 in the minimum variance portfolio of two assets.

    ``w1 = (vol2^2 - cov12) / (vol1^2 + vol2^2 - 2 cov12)``, clamped to
    ``[-1, 2]`` unless ``clamp`` is false.  Works elementwise on arrays.
    """
    v1 = np.asarray(vol1, float) ** 2
    v2 = np.asarray(vol2, float) ** 2
    c = np.asarray(cov12, float)
    den = v1 + v2 - 2 * c
    if np.any(np.abs(den) < 1e-12):
        raise SingularityError("vol1^2 + vol2^2 - 2 cov12 is numerically zero")
    w = (v2 - c) / den
    if clamp:
        w = np.clip(w, W_MIN, W_MAX)
    return float(w) if w.ndim == 0 else w


def portfolio_stats(returns):
    r = np.asarray(returns, float)
    mean = r.mean() * ANNUALIZATION
    vol = r.std(ddof=1) * np.sqrt(ANNUALIZATION) if r.size > 1 else 0.0
    if vol > 0:
        return PortfolioStats(float(mean), float(vol), float(mean / vol))
    return PortfolioStats(float(mean), float(vol), 0.0, sharpe_defined=False)


def backtest(r1, r2, f1, f2, corr, co_moment="covariance"):
    """Allocate at every step and report annualised performance.

    ``f1``/``f2`` are one-step-ahead volatility forecasts for the returns at
    the same timestamps.  ``corr[t]`` is the realized correlation of the
    window ending at ``t``; the weight at ``t`` uses ``corr[t - 1]`` (zero at
    the first step).  ``co_moment="covariance"`` plugs ``rho * f1 * f2`` into
    the weight formula, ``"literal"`` plugs the raw correlation.
    """
    arrays = [np.asarray(getattr(s, "values", s), float) for s in (r1, r2, f1, f2, corr)]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise AlignmentError("backtest inputs differ in length")
    stamps = [np.asarray(s.timestamps) for s in (r1, r2, f1, f2) if hasattr(s, "timestamps")]
    for s in stamps[1:]:
        if s.shape != stamps[0].shape or np.any(s != stamps[0]):
            raise AlignmentError("backtest inputs are stamped differently")
    ret1, ret2, vol1, vol2, rho = arrays
    lagged = np.concatenate([[0.0], rho[:-1]])
    if co_moment == "covariance":
        cov = lagged * vol1 * vol2
    elif co_moment == "literal":
        cov = lagged
    else:
        raise ValueError(f"co_moment must be 'covariance' or 'literal', got {co_moment!r}")
    raw = gmvp_weight(vol1, vol2, cov, clamp=False)
    w1 = np.clip(raw, W_MIN, W_MAX)
    port = w1 * ret1 + (1 - w1) * ret2
    ts = stamps[0] if stamps else np.arange(n)
    return BacktestResult(ts, vol1, vol2, cov, w1, port, portfolio_stats(port),
                          int(np.sum(raw != w1)))


def write_table2(results, path):
    """``results`` maps model name -> :class:`PortfolioStats`."""
    names = list(results)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + names)
        w.writerow(["Ann. Mean"] + [f"{results[n].ann_mean:.2f}" for n in names])
        w.writerow(["Ann. Volatility"] + [f"{results[n].ann_vol:.2f}" for n in names])
        w.writerow(["Ann. Sharpe Ratio"] + [f"{results[n].ann_sharpe:.2f}" for n in names])
