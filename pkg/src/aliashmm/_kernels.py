"""Compiled inner loops (Markov chain sampling, scaled forward-backward)."""
import numpy as np
from numba import njit


@njit(cache=True)
def sample_chain(cum_cols, x0, u):
    """Walk a chain given cumulative columns ``cum_cols[:, j]`` = CDF of next state given j."""
    T = u.shape[0] + 1
    n = cum_cols.shape[0]
    x = np.empty(T, dtype=np.int64)
    x[0] = x0
    for t in range(1, T):
        j = x[t - 1]
        r = u[t - 1]
        i = 0
        while i < n - 1 and r >= cum_cols[i, j]:
            i += 1
        x[t] = i
    return x


@njit(cache=True)
def forward_backward(A, pi0, dens):
    """Scaled forward-backward pass for column-stochastic ``A``.

    Returns (loglik, gamma, xi_sum, min_scale).  ``xi_sum[i, j]`` accumulates
    P(x_{t+1}=i, x_t=j | y) over t.  A zero scale factor is reported through
    ``min_scale`` rather than raised so the caller can attach context.
    """
    T, n = dens.shape
    alpha = np.empty((T, n))
    scale = np.empty(T)
    a = pi0 * dens[0]
    c = a.sum()
    scale[0] = c
    min_scale = c
    if c <= 0.0:
        return -np.inf, alpha, np.zeros((n, n)), 0.0
    alpha[0] = a / c
    for t in range(1, T):
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += A[i, j] * alpha[t - 1, j]
            a[i] = s * dens[t, i]
        c = a.sum()
        scale[t] = c
        if c < min_scale:
            min_scale = c
        if c <= 0.0:
            return -np.inf, alpha, np.zeros((n, n)), 0.0
        for i in range(n):
            alpha[t, i] = a[i] / c

    beta = np.empty((T, n))
    beta[T - 1] = 1.0
    xi_sum = np.zeros((n, n))
    w = np.empty(n)
    for t in range(T - 2, -1, -1):
        for i in range(n):
            w[i] = dens[t + 1, i] * beta[t + 1, i] / scale[t + 1]
        for j in range(n):
            s = 0.0
            for i in range(n):
                s += A[i, j] * w[i]
            beta[t, j] = s
        for i in range(n):
            for j in range(n):
                xi_sum[i, j] += alpha[t, j] * A[i, j] * w[i]

    gamma = alpha * beta
    loglik = 0.0
    for t in range(T):
        loglik += np.log(scale[t])
    return loglik, gamma, xi_sum, min_scale
