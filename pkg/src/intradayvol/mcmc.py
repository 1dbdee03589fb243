"""Gibbs sampler for the SV model with seasonal and spike-and-slab event effects.

One sweep updates, in order:

1. ``phi``            -- conjugate normal, truncated to (-1, 1) by rejection
2. ``sigma_x2``       -- conjugate inverse gamma
3. mixture indicators, then the latent path ``x`` by FFBS
4. ``(mu_h, beta)``   -- 288 bin intercepts, split into mean and zero-sum part
5. ``gamma``          -- beta
6. ``sigma_alpha2``   -- inverse gamma over active event coefficients
7. ``(alpha_j, pi_j)`` for each event column, with ``alpha_j`` integrated out
   when drawing ``pi_j``

Steps 3, 4 and 7 work on the linearised returns ``log(y**2 + c)`` whose
noise is approximated by the seven-component normal mixture below.
"""

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .errors import ConfigError, CoverageError, DivergenceError, NumericError
from .market_data import N_BINS, seasonal_bins
from .model import ModelParams, PriorConfig
from .rng import make_rng

logger = logging.getLogger(__name__)

LINEARIZE_OFFSET = 1e-8
LOG_CHI2_MEAN = -1.2704


@dataclass(frozen=True)
class MixtureTable:
    """Gaussian mixture ``sum_j q_j N(m_j, v_j)`` approximating ``log chi2_1``."""

    q: np.ndarray
    m: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("q", "m", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def mean(self):
        return float(np.dot(self.q, self.m))

    @property
    def variance(self):
        return float(np.dot(self.q, self.v + self.m**2) - self.mean**2)

    def validate(self, tol=1e-2):
        if not (self.q.shape == self.m.shape == self.v.shape):
            raise ConfigError("mixture arrays differ in length")
        if abs(self.q.sum() - 1) > 1e-10:
            raise ConfigError(f"mixture weights sum to {self.q.sum()!r}")
        if np.any(self.v <= 0) or np.any(self.q < 0):
            raise ConfigError("mixture variances must be positive and weights non-negative")
        if abs(self.mean - LOG_CHI2_MEAN) > tol:
            raise ConfigError(f"mixture mean {self.mean:.4f} far from log chi2_1 mean")
        if abs(self.variance - np.pi**2 / 2) > tol:
            raise ConfigError(f"mixture variance {self.variance:.4f} far from pi^2/2")
        return self


# Seven-component table for log chi2_1; means shifted by its mean.
KSC_TABLE = MixtureTable(
    q=[0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750],
    m=np.array([-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819]) + LOG_CHI2_MEAN,
    v=[5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261],
).validate()


class Variant(str, enum.Enum):
    FULL = "FULL"
    SSV = "SSV"  # no announcement component
    SV = "SV"  # no announcement, no seasonality


@dataclass(frozen=True)
class Schedule:
    n_iter: int = 20_000
    burn_in: int = 10_000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_iter <= self.burn_in or self.burn_in < 0:
            raise ConfigError("need n_iter > burn_in >= 0")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")

    @property
    def n_retained(self):
        return (self.n_iter - self.burn_in) // self.thin


# ------------------------------------------------------------------- helpers


def linearize(y, offset=LINEARIZE_OFFSET):
    """``log(y**2 + offset)``; the offset keeps exact zeros finite."""
    y = np.asarray(y, dtype=float)
    return np.log(y * y + offset)


def _inv_gamma(rng, shape, scale):
    return scale / rng.gamma(shape)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


# ----------------------------------------------------------- step 3: mixture


def mixture_probabilities(resid, table=KSC_TABLE):
    """Posterior component probabilities, shape ``(T, J)``, for residuals
    ``y*_t - h_t``."""
    r = np.asarray(resid, dtype=float)[:, None]
    logp = np.log(table.q) - 0.5 * np.log(table.v) - 0.5 * (r - table.m) ** 2 / table.v
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    p /= p.sum(axis=1, keepdims=True)
    return p


def step_mixture_indicators(y_star, h, table, rng):
    """Draw component indices (0-based) given the current log-variance."""
    p = mixture_probabilities(np.asarray(y_star) - np.asarray(h), table)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0])[:, None]
    s = (u > cdf).sum(axis=1)
    return np.minimum(s, p.shape[1] - 1)


def step_latent_x(z, obs_var, phi, sigma_x2, rng):
    """FFBS draw of ``x`` from ``z_t = x_t + N(0, obs_var_t)`` and the AR(1) prior.

    ``z`` is the linearised return minus every other component and the
    selected mixture means; ``obs_var`` the selected mixture variances.
    """
    if not abs(phi) < 1:
        raise ConfigError(f"|phi| must be < 1, got {phi}")
    z = np.ascontiguousarray(z, dtype=float)
    obs_var = np.ascontiguousarray(obs_var, dtype=float)
    _check_finite("FFBS observations", z)
    _check_finite("FFBS variances", obs_var)
    normals = rng.standard_normal(z.size)
    x = _kernels.ffbs(z, obs_var, float(phi), float(sigma_x2), normals)
    _check_finite("latent path", x)
    return x


# ------------------------------------------------------------ steps 1 and 2


def phi_conditional(x, sigma_x2, prior):
    """Mean and variance of the (untruncated) normal full conditional of phi."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ConfigError("need T >= 2")
    lag, cur = x[:-1], x[1:]
    prec = 1.0 / prior.phi_var + np.dot(lag, lag) / sigma_x2
    mean = (prior.phi_mean / prior.phi_var + np.dot(lag, cur) / sigma_x2) / prec
    return mean, 1.0 / prec


def step_phi(x, sigma_x2, prior, rng, max_tries=10_000):
    mean, var = phi_conditional(x, sigma_x2, prior)
    sd = np.sqrt(var)
    for _ in range(max_tries):
        phi = mean + sd * rng.standard_normal()
        if -1 < phi < 1:
            return float(phi)
    raise DivergenceError(f"phi draw rejected {max_tries} times (mean {mean:.4f}, sd {sd:.2e})")


def sigma_x2_conditional(x, phi, prior, stationary_term=True):
    """Inverse-gamma ``(shape, scale)`` of the full conditional of sigma_x2.

    With ``stationary_term`` the density of ``x_1`` under the stationary
    distribution is part of the likelihood.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ConfigError("need T >= 2")
    e = x[1:] - phi * x[:-1]
    shape = prior.ig_x_shape + 0.5 * e.size
    scale = prior.ig_x_scale + 0.5 * np.dot(e, e)
    if stationary_term:
        shape += 0.5
        scale += 0.5 * (1 - phi * phi) * x[0] ** 2
    return shape, scale


def step_sigma_x2(x, phi, prior, rng, stationary_term=True):
    shape, scale = sigma_x2_conditional(x, phi, prior, stationary_term)
    return float(_inv_gamma(rng, shape, scale))


# ------------------------------------------------------------------ step 4


def bin_conditional(resid, obs_var, bins, prior, n_bins=N_BINS):
    """Per-bin normal conditional ``(mean, var)`` of the unconstrained intercepts.

    ``resid`` is the linearised return net of ``x``, events and mixture means.
    """
    bins = np.asarray(bins, dtype=np.int64)
    w = 1.0 / np.asarray(obs_var, dtype=float)
    counts = np.bincount(bins, minlength=n_bins)
    if np.any(counts[:n_bins] == 0):
        k = int(np.argmax(counts[:n_bins] == 0))
        raise CoverageError(f"seasonal bin {k} has no observations")
    prec = 1.0 / prior.coef_var + np.bincount(bins, weights=w, minlength=n_bins)
    num = prior.coef_mean / prior.coef_var + np.bincount(bins, weights=w * resid, minlength=n_bins)
    return num / prec, 1.0 / prec


def step_mu_beta(resid, obs_var, bins, prior, rng, n_bins=N_BINS):
    """Draw the bin intercepts and split them into ``mu_h`` and zero-sum ``beta``."""
    mean, var = bin_conditional(resid, obs_var, bins, prior, n_bins)
    coef = mean + np.sqrt(var) * rng.standard_normal(n_bins)
    mu = coef.mean()
    return float(mu), coef - mu


# ------------------------------------------------------------- steps 5 and 6


def gamma_conditional(pi, prior):
    pi = np.asarray(pi)
    k = int(pi.sum())
    return prior.gamma_a + k, prior.gamma_b + pi.size - k


def step_gamma(pi, prior, rng):
    if np.asarray(pi).size < 1:
        raise ConfigError("need at least one event column")
    a, b = gamma_conditional(pi, prior)
    g = rng.beta(a, b)
    # keep strictly inside (0, 1) so log-odds stay finite
    return float(np.clip(g, np.finfo(float).tiny, 1 - np.finfo(float).eps))


def sigma_alpha2_conditional(alpha, pi, prior):
    active = np.asarray(alpha, dtype=float)[np.asarray(pi) == 1]
    return prior.ig_a_shape + 0.5 * active.size, prior.ig_a_scale + 0.5 * np.dot(active, active)


def step_sigma_alpha2(alpha, pi, prior, rng):
    shape, scale = sigma_alpha2_conditional(alpha, pi, prior)
    return float(_inv_gamma(rng, shape, scale))


# ------------------------------------------------------------------ step 7


def alpha_conditional(resid, obs_var, sigma_alpha2):
    """Normal full conditional ``(m, v)`` of one event coefficient under the slab.

    ``resid`` holds the linearised returns at the column's active rows net of
    every other component; with no rows the conditional is the slab itself.
    """
    w = 1.0 / np.asarray(obs_var, dtype=float)
    prec = 1.0 / sigma_alpha2 + w.sum()
    return float(np.dot(w, resid) / prec), float(1.0 / prec)


def inclusion_probability(m, v, gamma, sigma_alpha2):
    """P(pi_j = 1 | rest) with alpha_j integrated out.

    Odds are ``gamma * N(0; 0, sigma_alpha2) / N(0; m, v)`` against
    ``1 - gamma``.
    """
    if not v > 0:
        raise NumericError(f"conditional variance must be positive, got {v}")
    if gamma <= 0:
        return 0.0
    if gamma >= 1:
        return 1.0
    log_ratio = -0.5 * np.log(sigma_alpha2) + 0.5 * np.log(v) + 0.5 * m * m / v
    log_odds = np.log(gamma) - np.log1p(-gamma) + log_ratio
    return float(1.0 / (1.0 + np.exp(-log_odds))) if log_odds > -700 else 0.0


def step_alpha_pi(resid, obs_var, gamma, sigma_alpha2, rng):
    m, v = alpha_conditional(resid, obs_var, sigma_alpha2)
    p = inclusion_probability(m, v, gamma, sigma_alpha2)
    if rng.random() < p:
        return m + np.sqrt(v) * rng.standard_normal(), 1
    return 0.0, 0


# ----------------------------------------------------------------- the chain


@dataclass
class SamplerState:
    mu_h: float
    phi: float
    sigma_x2: float
    beta: np.ndarray
    alpha: np.ndarray
    pi: np.ndarray
    gamma: float
    sigma_alpha2: float
    x: np.ndarray
    s: np.ndarray
    rng: np.random.Generator = field(repr=False)

    def params(self):
        return ModelParams(self.mu_h, self.phi, self.sigma_x2, self.beta.copy(),
                           self.alpha.copy(), self.pi.copy(), self.gamma, self.sigma_alpha2)


@dataclass
class PosteriorDraws:
    """Retained sweeps; arrays have one row per retained sweep."""

    variant: Variant
    iteration: np.ndarray
    loglik: np.ndarray
    mu_h: np.ndarray
    phi: np.ndarray
    sigma_x2: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    pi: np.ndarray
    gamma: np.ndarray
    sigma_alpha2: np.ndarray
    column_labels: tuple = ()
    x_mean: np.ndarray = None
    x_draws: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.iteration.size

    @property
    def n_retained(self):
        return len(self)

    def posterior_means(self):
        return {
            "mu_h": float(self.mu_h.mean()),
            "phi": float(self.phi.mean()),
            "sigma_x2": float(self.sigma_x2.mean()),
            "beta": self.beta.mean(axis=0),
            "alpha": self.alpha.mean(axis=0),
            "pi": self.pi.mean(axis=0),
            "gamma": float(self.gamma.mean()),
            "sigma_alpha2": float(self.sigma_alpha2.mean()),
        }

    def scalar_columns(self):
        cols = {"iteration": self.iteration, "loglik": self.loglik, "mu_h": self.mu_h,
                "phi": self.phi, "sigma_x2": self.sigma_x2}
        if self.variant == Variant.FULL:
            cols["gamma"] = self.gamma
            cols["sigma_alpha2"] = self.sigma_alpha2
        return cols

    def columns(self):
        """Ordered ``(name, 1-d array)`` pairs for columnar export."""
        out = list(self.scalar_columns().items())
        if self.variant != Variant.SV:
            out += [(f"beta[{k}]", self.beta[:, k]) for k in range(self.beta.shape[1])]
        if self.variant == Variant.FULL:
            out += [(f"alpha[{lab}]", self.alpha[:, j]) for j, lab in enumerate(self.column_labels)]
            out += [(f"pi[{lab}]", self.pi[:, j]) for j, lab in enumerate(self.column_labels)]
        return out


def merge_draws(chains):
    """Concatenate independently run chains of the same model."""
    first = chains[0]
    if any(c.variant != first.variant or c.column_labels != first.column_labels for c in chains):
        raise ConfigError("chains differ in variant or event columns")
    cat = lambda name: np.concatenate([getattr(c, name) for c in chains])
    x_means = [c.x_mean for c in chains if c.x_mean is not None]
    return PosteriorDraws(
        first.variant, cat("iteration"), cat("loglik"), cat("mu_h"), cat("phi"), cat("sigma_x2"),
        cat("beta"), cat("alpha"), cat("pi"), cat("gamma"), cat("sigma_alpha2"),
        first.column_labels,
        x_mean=np.mean(x_means, axis=0) if len(x_means) == len(chains) else None,
        meta={"chains": [c.meta for c in chains]},
    )


def _initial_state(y_star, variant, n_cols, prior, rng):
    mu0 = float(np.mean(y_star) - LOG_CHI2_MEAN)
    T = y_star.size
    full = variant == Variant.FULL
    return SamplerState(
        mu_h=mu0,
        phi=float(np.clip(prior.phi_mean, -0.99, 0.99)),
        sigma_x2=prior.ig_x_scale / (prior.ig_x_shape - 1) if prior.ig_x_shape > 1 else 0.01,
        beta=np.zeros(N_BINS),
        alpha=np.zeros(n_cols if full else 0),
        pi=np.zeros(n_cols if full else 0, dtype=np.int8),
        gamma=prior.gamma_a / (prior.gamma_a + prior.gamma_b),
        sigma_alpha2=prior.ig_a_scale / (prior.ig_a_shape - 1) if prior.ig_a_shape > 1 else 1.0,
        x=np.zeros(T),
        s=np.zeros(T, dtype=np.int64),
        rng=rng,
    )


def _log_likelihood(y, h):
    return float(-0.5 * np.sum(np.log(2 * np.pi) + h + y * y * np.exp(-h)))


def run_chain(data, design, prior=None, schedule=None, variant=Variant.FULL, *,
              table=KSC_TABLE, offset=LINEARIZE_OFFSET, stationary_term=True,
              keep_x_every=None, log_every=0):
    """Run one Gibbs chain and return the retained draws.

    ``data`` is a 5-minute :class:`ReturnSeries`; ``design`` the event matrix
    with one row per return (ignored unless ``variant`` is FULL).
    ``keep_x_every`` stores every k-th retained latent path.
    """
    prior = prior or PriorConfig()
    schedule = schedule or Schedule()
    variant = Variant(variant)
    y = np.asarray(data.values, dtype=float)
    T = y.size
    if T < 2:
        raise ConfigError("need at least two returns")
    full = variant == Variant.FULL
    if full:
        if design is None or design.n_rows != T:
            raise ConfigError(f"design must have {T} rows, has {getattr(design, 'n_rows', None)}")
        if design.n_cols < 1:
            raise ConfigError("FULL variant needs at least one event column")
    seasonal = variant != Variant.SV
    bins = seasonal_bins(data.timestamps) if seasonal else np.zeros(T, dtype=np.int64)
    n_bins = N_BINS if seasonal else 1

    rng = make_rng(schedule.seed)
    y_star = linearize(y, offset)
    n_cols = design.n_cols if full else 0
    st = _initial_state(y_star, variant, n_cols, prior, rng)
    # Start x from its conditional under the initial parameters: with x = 0 the
    # first phi draw is pure prior and sigma_x2 collapses, a slow-to-leave trap.
    s0 = step_mixture_indicators(y_star, st.mu_h + st.x, table, rng)
    st.x = step_latent_x(y_star - st.mu_h - table.m[s0], table.v[s0], st.phi, st.sigma_x2, rng)
    col_rows = [design.column_rows(j) for j in range(n_cols)]
    e = np.zeros(T)

    n_keep = schedule.n_retained
    out = {k: np.empty(n_keep) for k in ("iteration", "loglik", "mu_h", "phi", "sigma_x2",
                                        "gamma", "sigma_alpha2")}
    out["beta"] = np.empty((n_keep, N_BINS))
    out["alpha"] = np.empty((n_keep, n_cols))
    out["pi"] = np.empty((n_keep, n_cols), dtype=np.int8)
    x_sum = np.zeros(T)
    x_kept = []
    k = 0
    started = time.perf_counter()

    for it in range(1, schedule.n_iter + 1):
        # 1-2: AR(1) parameters
        st.phi = step_phi(st.x, st.sigma_x2, prior, rng)
        st.sigma_x2 = step_sigma_x2(st.x, st.phi, prior, rng, stationary_term)

        # 3: mixture indicators then the latent path
        other = st.mu_h + st.beta[bins] + e
        st.s = step_mixture_indicators(y_star, other + st.x, table, rng)
        m_s, v_s = table.m[st.s], table.v[st.s]
        st.x = step_latent_x(y_star - other - m_s, v_s, st.phi, st.sigma_x2, rng)

        # 4: level and seasonality
        if seasonal:
            st.mu_h, st.beta = step_mu_beta(y_star - st.x - e - m_s, v_s, bins, prior, rng)
        else:
            st.mu_h, _ = step_mu_beta(y_star - st.x - m_s, v_s, bins, prior, rng, n_bins=1)

        if full:
            # 5-6: hyperparameters of the spike and slab
            st.gamma = step_gamma(st.pi, prior, rng)
            st.sigma_alpha2 = step_sigma_alpha2(st.alpha, st.pi, prior, rng)
            # 7: event coefficients, columns in random order
            base = y_star - m_s - st.mu_h - st.x - st.beta[bins] - e
            for j in rng.permutation(n_cols):
                rows = col_rows[j]
                old = st.alpha[j]
                a_new, p_new = step_alpha_pi(base[rows] + old, v_s[rows], st.gamma,
                                             st.sigma_alpha2, rng)
                if a_new != old:
                    base[rows] -= a_new - old
                    e[rows] += a_new - old
                st.alpha[j], st.pi[j] = a_new, p_new

        h = st.mu_h + st.x + st.beta[bins] + e
        if not (np.isfinite(st.mu_h) and np.isfinite(st.phi) and np.isfinite(st.sigma_x2)
                and np.all(np.isfinite(h))):
            raise NumericError(f"non-finite sampler state at sweep {it}")

        if it > schedule.burn_in and (it - schedule.burn_in) % schedule.thin == 0 and k < n_keep:
            ll = _log_likelihood(y, h)
            out["iteration"][k] = it
            out["loglik"][k] = ll
            out["mu_h"][k] = st.mu_h
            out["phi"][k] = st.phi
            out["sigma_x2"][k] = st.sigma_x2
            out["gamma"][k] = st.gamma
            out["sigma_alpha2"][k] = st.sigma_alpha2
            out["beta"][k] = st.beta
            out["alpha"][k] = st.alpha
            out["pi"][k] = st.pi
            x_sum += st.x
            if keep_x_every and k % keep_x_every == 0:
                x_kept.append(st.x.copy())
            k += 1
        if log_every and it % log_every == 0:
            logger.info("sweep %d/%d mu_h=%.3f phi=%.4f sigma_x=%.4f active=%d (%.1fs)",
                        it, schedule.n_iter, st.mu_h, st.phi, np.sqrt(st.sigma_x2),
                        int(st.pi.sum()), time.perf_counter() - started)

    return PosteriorDraws(
        variant=variant,
        column_labels=tuple(design.column_labels) if full else (),
        x_mean=x_sum / max(k, 1),
        x_draws=np.array(x_kept) if x_kept else None,
        meta={"seed": schedule.seed, "n_iter": schedule.n_iter, "burn_in": schedule.burn_in,
              "thin": schedule.thin, "variant": variant.value,
              "seconds": round(time.perf_counter() - started, 3)},
        **out,
    )


def inclusion_summary(draws):
    """Per-column posterior mean of ``pi`` and of the multiplier ``exp(alpha / 2)``."""
    if len(draws) == 0:
        raise ConfigError("no retained draws")
    return {
        "labels": tuple(draws.column_labels),
        "mean_pi": draws.pi.mean(axis=0),
        "mean_effect": np.exp(draws.alpha / 2).mean(axis=0),
    }
