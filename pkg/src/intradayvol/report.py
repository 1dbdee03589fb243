"""Posterior summaries: parameter table, event inclusion layout, seasonal,
level and persistent-volatility effects."""

import csv

import numpy as np

from .errors import DataError
from .mcmc import Variant, inclusion_summary
from .model import annualize


def parameter_summary(draws):
    """``{name: (mean, sd)}`` for the scalar parameters (plus sigma_x)."""
    out = {}
    names = ["mu_h", "phi", "sigma_x2"]
    if draws.variant == Variant.FULL:
        names += ["gamma", "sigma_alpha2"]
    for k in names:
        v = getattr(draws, k)
        out[k] = (float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0)
    sx = np.sqrt(draws.sigma_x2)
    out["sigma_x"] = (float(sx.mean()), float(sx.std(ddof=1)) if sx.size > 1 else 0.0)
    return out


def event_table(draws, n_lags=6):
    """Rows of ``(event_id, [mean pi per lag], [mean exp(alpha/2) per lag])``.

    Column labels are expected as ``"<event_id>:<lag>"``.
    """
    s = inclusion_summary(draws)
    rows = {}
    for label, p, eff in zip(s["labels"], s["mean_pi"], s["mean_effect"]):
        eid, _, lag = label.rpartition(":")
        lag = int(lag) if lag.isdigit() else 1
        entry = rows.setdefault(eid, ([np.nan] * n_lags, [np.nan] * n_lags))
        if 1 <= lag <= n_lags:
            entry[0][lag - 1] = float(p)
            entry[1][lag - 1] = float(eff)
    return [(eid, pis, effs) for eid, (pis, effs) in rows.items()]


def write_summary(draws, path, n_lags=6):
    """Parameter means/sds followed, for the full model, by the per-event
    inclusion and effect table (one column per 5-minute lag)."""
    lag_names = [f"{5 * (k + 1)} Min" for k in range(n_lags)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "name", "mean", "sd"] + [""] * (n_lags - 2))
        for k, (m, sd) in parameter_summary(draws).items():
            w.writerow(["param", k, repr(m), repr(sd)])
        if draws.variant != Variant.SV:
            beta = draws.beta.mean(axis=0)
            for k, b in enumerate(beta):
                w.writerow(["beta", k, repr(float(b)), repr(float(draws.beta[:, k].std(ddof=1)) if len(draws) > 1 else 0.0)])
        if draws.variant == Variant.FULL:
            w.writerow(["section", "event"] + lag_names)
            for eid, pis, effs in event_table(draws, n_lags):
                w.writerow(["pi", eid] + [f"{p:.2f}" for p in pis])
            for eid, pis, effs in event_table(draws, n_lags):
                w.writerow(["effect", eid] + [f"{e:.2f}" for e in effs])


def read_summary_params(path):
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if row and row[0] == "param":
                out[row[1]] = (float(row[2]), float(row[3]))
    return out


def seasonal_effect(draws, level=0.9):
    """Posterior mean and equal-tailed interval of ``exp(beta / 2)`` per bin."""
    S = np.exp(draws.beta / 2)
    lo, hi = np.quantile(S, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return S.mean(axis=0), lo, hi


def volume_regression(volume, effect):
    """OLS of average traded volume on the seasonal effect, per bin.

    Returns ``(intercept, slope, r2)``; the change in the effect implied by
    ``dv`` extra contracts is ``dv / slope``.
    """
    v = np.asarray(volume, float)
    s = np.asarray(effect, float)
    if v.shape != s.shape or v.size < 3:
        raise DataError("volume and effect must be equal-length with at least 3 bins")
    X = np.column_stack([np.ones(s.size), s])
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    resid = v - X @ coef
    r2 = 1 - resid @ resid / np.sum((v - v.mean()) ** 2)
    return float(coef[0]), float(coef[1]), float(r2)


def level_effect(draws):
    """Posterior mean of the baseline volatility ``exp(mu_h / 2)``, raw and annualised."""
    sigma = float(np.exp(draws.mu_h / 2).mean())
    return sigma, annualize(sigma)


def level_sv_path(draws):
    """``exp(mu_h/2) * exp(x_t/2)`` at the posterior means of ``mu_h`` and ``x``."""
    if draws.x_mean is None:
        raise DataError("draws carry no latent path summary")
    return np.exp(draws.mu_h.mean() / 2) * np.exp(draws.x_mean / 2)
