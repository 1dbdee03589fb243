"""Competitor volatility models: AR(1) and HAR on realized volatility,
GARCH(1,1) and GJR-GARCH(1,1) by Gaussian quasi maximum likelihood.

Every fit exposes ``forecast`` producing one-step-ahead volatility (percent)
on the same 5-minute grid as the proposal.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _kernels
from .errors import ConfigError, DataError, OptimizerError, RankError
from .rng import make_rng


@dataclass
class BaselineFit:
    model: str
    labels: tuple
    params: np.ndarray
    objective: float  # log-likelihood for GARCH family, SSR for OLS fits
    converged: bool = True
    std_errors: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def __getitem__(self, label):
        return float(self.params[self.labels.index(label)])

    def to_json(self):
        d = {
            "model": self.model,
            "labels": list(self.labels),
            "params": {k: float(v) for k, v in zip(self.labels, self.params)},
            "objective": float(self.objective),
            "converged": bool(self.converged),
        }
        if self.std_errors is not None:
            d["std_errors"] = {k: float(v) for k, v in zip(self.labels, self.std_errors)}
        d.update(self.extra)
        return json.dumps(d, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        labels = tuple(d.get("labels", d["params"]))
        se = d.get("std_errors")
        extra = {k: v for k, v in d.items()
                 if k not in ("model", "labels", "params", "objective", "converged", "std_errors")}
        return cls(d["model"], labels, np.array([d["params"][k] for k in labels]),
                   d["objective"], d["converged"],
                   None if se is None else np.array([se[k] for k in labels]), extra)

    def forecast(self, series):
        """One-step-ahead volatility for every point of ``series``.

        Element ``t`` uses observations before ``t`` only; the first
        ``warmup`` elements are NaN for the RV models.
        """
        if self.model == "AR1-RV":
            return _ar1_forecast(self.params, np.asarray(series, float))
        if self.model == "HAR":
            return _har_forecast(self.params, np.asarray(series, float))
        if self.model in ("GARCH", "GJR-GARCH"):
            y = np.asarray(series, float)
            p = dict(zip(self.labels, self.params))
            s0 = self.extra.get("initial_variance", float(np.var(y)))
            s2 = _kernels.garch_variance(y, p["omega"], p["a"], p["b"], p.get("g", 0.0), s0)
            return np.sqrt(s2[:-1])
        raise ConfigError(f"unknown model {self.model!r}")


# --------------------------------------------------------------------- OLS


def ols(X, y):
    """Least squares with a rank check; returns ``(coef, residuals)``."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    coef, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        raise RankError(f"design matrix is rank deficient (rank {rank} < {X.shape[1]})")
    return coef, y - X @ coef


def har_regressors(rv):
    """Columns ``(1, RV_{t-1}, mean RV_{t-12..t-1}, mean RV_{t-288..t-1})`` for
    ``t = 288 .. T-1`` (0-based)."""
    rv = np.asarray(rv, float)
    c = np.concatenate([[0.0], np.cumsum(rv)])
    t = np.arange(288, rv.size)
    daily = (c[t] - c[t - 288]) / 288
    hourly = (c[t] - c[t - 12]) / 12
    return np.column_stack([np.ones(t.size), rv[t - 1], hourly, daily]), t


def fit_ar1_rv(rv):
    values = np.asarray(getattr(rv, "values", rv), float)
    if values.size < 3:
        raise DataError("AR1-RV needs at least 3 observations")
    X = np.column_stack([np.ones(values.size - 1), values[:-1]])
    coef, resid = ols(X, values[1:])
    return BaselineFit("AR1-RV", ("c", "rho"), coef, float(resid @ resid))


def fit_har(rv):
    values = np.asarray(getattr(rv, "values", rv), float)
    if values.size < 289:
        raise DataError(f"HAR needs at least 289 observations, got {values.size}")
    X, t = har_regressors(values)
    coef, resid = ols(X, values[t])
    return BaselineFit("HAR", ("c", "b_5min", "b_hour", "b_day"), coef, float(resid @ resid))


def _ar1_forecast(params, rv):
    out = np.full(rv.size, np.nan)
    out[1:] = params[0] + params[1] * rv[:-1]
    return np.maximum(out, 0.0)


def _har_forecast(params, rv):
    out = np.full(rv.size, np.nan)
    if rv.size > 288:
        X, t = har_regressors(rv)
        out[t] = X @ params
    return np.maximum(out, 0.0)


# ------------------------------------------------------------------- GARCH


def _to_natural(u, gjr):
    """Unconstrained vector -> (omega, a, b, g) inside the stationarity region.

    ``omega = exp(u0)``; persistence ``a + b + g/2`` is a logistic in (0, 1)
    split by a softmax over ``b``, ``a/2`` and ``(a + g)/2`` (GJR) or over
    ``b`` and ``a`` (GARCH), so ``a >= 0`` and ``a + g >= 0``.
    """
    omega = np.exp(u[0])
    persist = 1.0 / (1.0 + np.exp(-u[1]))
    z = np.concatenate([[0.0], u[2:]])
    w = np.exp(z - z.max())
    w /= w.sum()
    b = persist * w[0]
    if not gjr:
        return omega, persist * w[1], b, 0.0
    a = 2.0 * persist * w[1]
    return omega, a, b, 2.0 * persist * w[2] - a


def _to_unconstrained(omega, a, b, g, gjr):
    persist = a + b + g / 2
    parts = [b, a / 2, (a + g) / 2] if gjr else [b, a]
    z = np.log(np.maximum(parts, 1e-8))
    return np.concatenate([[np.log(omega), np.log(persist / (1 - persist))], z[1:] - z[0]])


def garch_loglik(y, omega, a, b, g=0.0, initial_variance=None):
    y = np.ascontiguousarray(y, dtype=float)
    s0 = float(np.var(y)) if initial_variance is None else initial_variance
    return -_kernels.garch_nll(y, omega, a, b, g, s0)


def numerical_hessian(f, x, rel_step=1e-4):
    x = np.asarray(x, float)
    n = x.size
    h = rel_step * np.maximum(np.abs(x), 1e-3)
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
    return H


def _fit_garch_family(y, gjr, starts=None):
    y = np.ascontiguousarray(getattr(y, "values", y), dtype=float)
    if y.size < 100:
        raise DataError(f"GARCH needs at least 100 observations, got {y.size}")
    s0 = float(np.var(y))
    if starts is None:
        # variance targeting: omega matches the sample variance at each start
        starts = [(s0 * (1 - a - b), a, b) for a, b in ((0.05, 0.90), (0.10, 0.80), (0.03, 0.95))]

    def nll(u):
        omega, a, b, g = _to_natural(u, gjr)
        return _kernels.garch_nll(y, omega, a, b, g, s0) / y.size

    trace = []
    best = None
    for omega0, a0, b0 in starts:
        u0 = _to_unconstrained(omega0, a0, b0, 0.0, gjr)
        res = optimize.minimize(nll, u0, method="BFGS", options={"gtol": 1e-7, "maxiter": 2000})
        if not res.success:
            # BFGS often stops on precision loss at the optimum; polish derivative-free
            res = optimize.minimize(nll, res.x, method="Nelder-Mead",
                                    options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 20000})
        trace.append({"start": [omega0, a0, b0], "nll": float(res.fun), "success": bool(res.success),
                      "message": str(res.message)})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise OptimizerError("all GARCH starts failed", trace)

    omega, a, b, g = _to_natural(best.x, gjr)
    labels = ("omega", "a", "b", "g") if gjr else ("omega", "a", "b")
    theta = np.array([omega, a, b, g] if gjr else [omega, a, b])

    def nll_natural(th):
        o, aa, bb = th[:3]
        gg = th[3] if gjr else 0.0
        return _kernels.garch_nll(y, o, aa, bb, gg, s0)

    try:
        cov = np.linalg.inv(numerical_hessian(nll_natural, theta))
        se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
    except np.linalg.LinAlgError:
        se = np.full(theta.size, np.nan)
    return BaselineFit("GJR-GARCH" if gjr else "GARCH", labels, theta, -float(best.fun) * y.size,
                       converged=any(t["success"] for t in trace), std_errors=se,
                       extra={"initial_variance": s0, "trace": trace})


def fit_garch11(y, starts=None):
    """Gaussian QMLE of ``s2_t = omega + a y_{t-1}^2 + b s2_{t-1}``."""
    return _fit_garch_family(y, gjr=False, starts=starts)


def fit_gjr_garch(y, starts=None):
    """GJR variant adding ``g y_{t-1}^2 1[y_{t-1} < 0]``."""
    return _fit_garch_family(y, gjr=True, starts=starts)


def simulate_garch(T, omega, a, b, g=0.0, seed=0, burn=1000):
    rng = make_rng(seed)
    z = rng.standard_normal(T + burn)
    y = np.empty(T + burn)
    s2 = omega / (1 - a - b - g / 2)
    for t in range(T + burn):
        y[t] = np.sqrt(s2) * z[t]
        s2 = omega + (a + (g if y[t] < 0 else 0.0)) * y[t] ** 2 + b * s2
    return y[burn:]
