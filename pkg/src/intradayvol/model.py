"""Model parameterisation, log-variance decomposition and simulator.

The log-variance of the 5-minute return is

    h_t = mu_h + x_t + beta[bin(t)] + sum of alpha over events active at t

with ``x_t`` a stationary AR(1).  ``exp(h_t / 2)`` factors into level,
persistent, seasonal and announcement multipliers.
"""

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DomainError, StationarityError
from .market_data import N_BINS, BIN_MINUTES, ReturnSeries, seasonal_bins
from .rng import make_rng

ANNUALIZATION = 252 * 288
PARAM_KEYS = ("mu_h", "phi", "sigma_x2", "beta", "alpha", "pi", "gamma", "sigma_alpha2")


@dataclass(frozen=True)
class ModelParams:
    mu_h: float
    phi: float
    sigma_x2: float
    beta: np.ndarray = field(default_factory=lambda: np.zeros(N_BINS))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pi: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    gamma: float = 0.05
    sigma_alpha2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=np.int8))

    @property
    def n_events(self):
        return self.alpha.size

    def validate(self, seasonal=True):
        """Raise ``ConfigError`` unless every invariant holds."""
        if not abs(self.phi) < 1:
            raise StationarityError(f"|phi| must be < 1, got {self.phi}")
        if not self.sigma_x2 > 0:
            raise ConfigError(f"sigma_x2 must be positive, got {self.sigma_x2}")
        if not self.sigma_alpha2 > 0:
            raise ConfigError(f"sigma_alpha2 must be positive, got {self.sigma_alpha2}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.beta.shape != (N_BINS,):
            raise ConfigError(f"beta must have {N_BINS} entries")
        if seasonal and abs(self.beta.sum()) > 1e-10:
            raise ConfigError(f"seasonal coefficients must sum to zero, sum={self.beta.sum():.3g}")
        if self.alpha.shape != self.pi.shape:
            raise ConfigError("alpha and pi differ in length")
        if np.any((self.pi == 0) & (self.alpha != 0)):
            raise ConfigError("alpha must be zero where pi is zero")
        if not np.all(np.isin(self.pi, (0, 1))):
            raise ConfigError("pi must be 0/1")
        return self

    def to_dict(self):
        d = {}
        for k in PARAM_KEYS:
            v = getattr(self, k)
            d[k] = v.tolist() if isinstance(v, np.ndarray) else float(v)
        return d

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ("mu_h", "phi", "sigma_x2") if k not in d]
        if missing:
            raise ConfigError(f"missing parameter keys {missing}")
        kw = {k: d[k] for k in PARAM_KEYS if k in d}
        return cls(**kw)


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters; every coefficient prior is ``N(coef_mean, coef_var)``
    except ``phi`` which has its own normal prior truncated to (-1, 1)."""

    coef_mean: float = 0.0
    coef_var: float = 100.0
    phi_mean: float = 0.95
    phi_var: float = 0.25
    ig_x_shape: float = 2.5
    ig_x_scale: float = 0.025
    ig_a_shape: float = 2.5
    ig_a_scale: float = 2.5
    gamma_a: float = 1.0
    gamma_b: float = 19.0

    def __post_init__(self):
        for name in ("coef_var", "phi_var", "ig_x_shape", "ig_x_scale",
                     "ig_a_shape", "ig_a_scale", "gamma_a", "gamma_b"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"prior.{name} must be positive")

    def to_dict(self):
        return {f"prior.{k}": v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k.startswith("prior."):
                name = k[len("prior."):]
                if name not in names:
                    raise ConfigError(f"unknown prior key {k!r}")
                kw[name] = float(v)
        return cls(**kw)


@dataclass(frozen=True)
class LatentPath:
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ConfigError("latent path has non-finite values")
        object.__setattr__(self, "x", x)

    def __len__(self):
        return self.x.size


def save_config(path, params=None, prior=None, extra=None):
    d = {}
    if params is not None:
        d.update(params.to_dict())
    if prior is not None:
        d.update(prior.to_dict())
    if extra:
        d.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_config(path):
    """Return ``(params or None, PriorConfig, remaining keys)`` from a flat JSON file."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    params = ModelParams.from_dict(d) if "mu_h" in d else None
    prior = PriorConfig.from_dict(d)
    rest = {k: v for k, v in d.items() if k not in PARAM_KEYS and not k.startswith("prior.")}
    return params, prior, rest


# ---------------------------------------------------------------- decomposition


def log_variance(params, x_t, bin, event_row=()):
    """``mu_h + x_t + beta[bin] + sum(alpha[j] for j in event_row)``."""
    idx = np.asarray(event_row, dtype=np.int64)
    return float(params.mu_h + x_t + params.beta[bin] + params.alpha[idx].sum())


def multiplicative_components(params, x_t, bin, event_row=()):
    """Return ``(sigma, X_t, S_t, E_t)`` whose product is ``exp(h_t / 2)``."""
    idx = np.asarray(event_row, dtype=np.int64)
    return (
        float(np.exp(params.mu_h / 2)),
        float(np.exp(x_t / 2)),
        float(np.exp(params.beta[bin] / 2)),
        float(np.exp(params.alpha[idx].sum() / 2)),
    )


def annualize(vol_5min):
    """Scale a 5-minute volatility (percent) to an annual one."""
    v = np.asarray(vol_5min, dtype=float)
    if np.any(v < 0):
        raise DomainError("volatility must be non-negative")
    out = v * np.sqrt(ANNUALIZATION)
    return float(out) if out.ndim == 0 else out


def sinusoidal_beta(amplitude=0.5, n_bins=N_BINS, phase=0.0):
    """A zero-sum daily seasonal pattern, handy for simulation studies."""
    k = np.arange(n_bins)
    beta = amplitude * np.sin(2 * np.pi * k / n_bins + phase)
    return beta - beta.mean()


def synthetic_grid(T, start="2020-01-06T00:00:00", step=BIN_MINUTES):
    """Gap-free UTC grid of ``T`` timestamps."""
    t0 = np.datetime64(start, "s")
    return t0 + np.arange(T) * np.timedelta64(step * 60, "s")


def simulate(params, design, T, seed, timestamps=None):
    """Draw returns and the latent path from the model.

    ``x_1`` comes from the stationary distribution.  Returns
    ``(ReturnSeries, LatentPath)``.
    """
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not abs(params.phi) < 1:
        raise StationarityError(f"|phi| must be < 1, got {params.phi}")
    if design.n_rows != T:
        raise ConfigError(f"design has {design.n_rows} rows, need {T}")
    if design.n_cols != params.alpha.size:
        raise ConfigError(f"design has {design.n_cols} columns, params {params.alpha.size}")
    timestamps = synthetic_grid(T) if timestamps is None else np.asarray(timestamps, "datetime64[s]")
    rng = make_rng(seed)
    eta = rng.standard_normal(T)
    eps = rng.standard_normal(T)

    sx = np.sqrt(params.sigma_x2)
    shocks = sx * eta
    shocks[0] /= np.sqrt(1 - params.phi**2)
    x = lfilter([1.0], [1.0, -params.phi], shocks)

    h = params.mu_h + x + params.beta[seasonal_bins(timestamps)] + design.row_sum(params.alpha)
    y = np.exp(h / 2) * eps
    return ReturnSeries(timestamps, y, BIN_MINUTES), LatentPath(x)


def split_returns(returns, vol, n_sub, seed):
    """Sub-sample each return into ``n_sub`` i.i.d. normal pieces summing to it.

    Given the 5-minute return and its conditional volatility, the pieces are
    drawn from their exact conditional distribution given the sum.  Output is
    on a ``grid_step // n_sub`` minute grid, stamped at the end of each piece.
    """
    rng = make_rng(seed)
    y = np.asarray(returns.values, float)
    z = rng.standard_normal((y.size, n_sub))
    z -= z.mean(axis=1, keepdims=True)
    pieces = y[:, None] / n_sub + (np.asarray(vol, float) / np.sqrt(n_sub))[:, None] * z
    sub = returns.grid_step // n_sub
    offs = np.arange(n_sub - 1, -1, -1) * np.timedelta64(sub * 60, "s")
    ts = (np.asarray(returns.timestamps, "datetime64[s]")[:, None] - offs[None, :]).ravel()
    return ReturnSeries(ts, pieces.ravel(), sub)
