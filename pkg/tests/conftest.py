import numpy as np
import pytest

from intradayvol.market_data import EventDesignMatrix, N_BINS
from intradayvol.mcmc import PosteriorDraws, Variant
from intradayvol.rng import make_rng

_ACCEPTANCE = []


def make_design(T, n_events, n_lags, releases, seed):
    """Events released at random non-overlapping block starts, ``n_lags`` lags each."""
    rng = make_rng(seed)
    M = n_events * n_lags
    rows, cols = [], []
    for ev in range(n_events):
        starts = rng.choice(np.arange(0, T - n_lags, n_lags), size=releases, replace=False)
        for s0 in starts:
            for lag in range(n_lags):
                rows.append(s0 + lag)
                cols.append(ev * n_lags + lag)
    rows, cols = np.array(rows), np.array(cols)
    _, first = np.unique(rows * M + cols, return_index=True)
    labels = tuple(f"E{j // n_lags:02d}:{j % n_lags + 1}" for j in range(M))
    return EventDesignMatrix(T, M, rows[first], cols[first], labels)


def draws_from_params(params, variant=Variant.FULL, labels=None):
    """A one-sweep ``PosteriorDraws`` whose posterior means are ``params``."""
    M = params.alpha.size
    one = lambda v: np.array([v], dtype=float)
    return PosteriorDraws(
        variant=Variant(variant),
        iteration=one(1), loglik=one(0.0), mu_h=one(params.mu_h), phi=one(params.phi),
        sigma_x2=one(params.sigma_x2), beta=np.asarray(params.beta, float).reshape(1, N_BINS),
        alpha=params.alpha.reshape(1, M), pi=params.pi.reshape(1, M),
        gamma=one(params.gamma), sigma_alpha2=one(params.sigma_alpha2),
        column_labels=labels or tuple(f"c{j}:1" for j in range(M)),
    )


@pytest.fixture
def record_acceptance():
    def record(number, title, passed, detail=""):
        _ACCEPTANCE.append((number, title, passed, detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title} {detail}")
