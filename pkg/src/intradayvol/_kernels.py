"""Compiled inner loops: FFBS, the collapsed mixture filter, GARCH recursions."""

import numpy as np
from numba import njit


@njit(cache=True)
def ffbs(z, obs_var, phi, sigma2, normals):
    """Joint draw of ``x`` in ``z_t = x_t + e_t, e_t ~ N(0, obs_var_t)``.

    ``x`` is a stationary AR(1) with innovation variance ``sigma2``;
    ``normals`` supplies the ``T`` standard normal variates.
    """
    T = z.shape[0]
    m = np.empty(T)
    C = np.empty(T)
    Pn = np.empty(T)
    a = 0.0
    P = sigma2 / (1.0 - phi * phi)
    for t in range(T):
        S = P + obs_var[t]
        K = P / S
        m[t] = a + K * (z[t] - a)
        C[t] = P * obs_var[t] / S
        a = phi * m[t]
        P = phi * phi * C[t] + sigma2
        Pn[t] = P
    x = np.empty(T)
    x[T - 1] = m[T - 1] + np.sqrt(C[T - 1]) * normals[T - 1]
    for t in range(T - 2, -1, -1):
        G = C[t] * phi / Pn[t]
        mean = m[t] + G * (x[t + 1] - phi * m[t])
        var = C[t] * sigma2 / Pn[t]
        x[t] = mean + np.sqrt(var) * normals[t]
    return x


@njit(cache=True)
def mixture_filter(z, phi, sigma2, q, mean, var):
    """One-step predictive moments of ``x_t`` given ``z_1..z_{t-1}``.

    Observation noise is the Gaussian mixture ``(q, mean, var)``; the filtered
    mixture is collapsed to one Gaussian by moment matching each step.
    Returns ``(a, P)`` with ``a[t], P[t]`` the predictive mean and variance
    for step ``t`` and ``a[T], P[T]`` the forecast beyond the sample.
    """
    T = z.shape[0]
    J = q.shape[0]
    a_out = np.empty(T + 1)
    P_out = np.empty(T + 1)
    a = 0.0
    P = sigma2 / (1.0 - phi * phi)
    logw = np.empty(J)
    mj = np.empty(J)
    vj = np.empty(J)
    for t in range(T):
        a_out[t] = a
        P_out[t] = P
        top = -np.inf
        for j in range(J):
            S = P + var[j]
            r = z[t] - a - mean[j]
            logw[j] = np.log(q[j]) - 0.5 * (np.log(S) + r * r / S)
            if logw[j] > top:
                top = logw[j]
            K = P / S
            mj[j] = a + K * r
            vj[j] = P * var[j] / S
        tot = 0.0
        for j in range(J):
            logw[j] = np.exp(logw[j] - top)
            tot += logw[j]
        mu = 0.0
        second = 0.0
        for j in range(J):
            w = logw[j] / tot
            mu += w * mj[j]
            second += w * (vj[j] + mj[j] * mj[j])
        a = phi * mu
        P = phi * phi * (second - mu * mu) + sigma2
    a_out[T] = a
    P_out[T] = P
    return a_out, P_out


@njit(cache=True)
def garch_variance(y, omega, a, b, g, s0):
    """Conditional variances of a (GJR-)GARCH(1,1), length ``T + 1``.

    Element ``T`` is the one-step forecast beyond the sample.
    """
    T = y.shape[0]
    s2 = np.empty(T + 1)
    s2[0] = s0
    for t in range(1, T + 1):
        y2 = y[t - 1] * y[t - 1]
        lev = g * y2 if y[t - 1] < 0 else 0.0
        s2[t] = omega + a * y2 + lev + b * s2[t - 1]
    return s2


@njit(cache=True)
def garch_nll(y, omega, a, b, g, s0):
    T = y.shape[0]
    s2 = s0
    nll = 0.0
    for t in range(T):
        if t > 0:
            y2 = y[t - 1] * y[t - 1]
            lev = g * y2 if y[t - 1] < 0 else 0.0
            s2 = omega + a * y2 + lev + b * s2
        if s2 <= 0.0:
            return np.inf
        nll += 0.5 * (np.log(2 * np.pi) + np.log(s2) + y[t] * y[t] / s2)
    return nll
