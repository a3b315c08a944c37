"""Emission kernel and lagged second/third order output moments.

For distinct emission densities ``f_1..f_m`` (m = n-1 when the model is
2-aliased) and stationary merged weights ``pi_m``:

* ``lag[t-1][i, j] = E f_i(y_{l+t}) f_j(y_l)``           (t = 1, 2, 3)
* ``triple[c][i, j] = E f_i(y_{l+2}) f_c(y_{l+1}) f_j(y_l)``

The kernel-free versions undo the kernel and the weights,
``X -> K^-1 X K^-1 diag(pi_m)^-1``; the deltas isolate the part that a
merged (non-aliased) chain cannot produce.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .decomp import lifting, projection
from .errors import DegenerateMomentError, SequenceTooShortError, ValidationError
from .hmm import EmissionParam, Hmm, density_matrix, stationary

KERNEL_COND_WARN = 1e8
MIN_T = 4
LAGS = 3


@dataclass(frozen=True, eq=False)
class Kernel:
    """Gram matrix of the distinct emission densities."""

    K: np.ndarray
    emissions: tuple
    cond: float

    @property
    def m(self) -> int:
        return self.K.shape[0]

    def lifted(self, n: int) -> np.ndarray:
        """``B^T K B`` for an n-state model whose last two states share the last component."""
        if n == self.m:
            return self.K.copy()
        B = projection(n)
        return B.T @ self.K @ B

    def solve(self, X):
        """``K^-1 X``."""
        return cho_solve(self._chol, X)

    @property
    def _chol(self):
        c = self.__dict__.get("_c")
        if c is None:
            c = cho_factor(self.K, lower=True)
            object.__setattr__(self, "_c", c)
        return c

    def permuted(self, perm) -> "Kernel":
        perm = np.asarray(perm)
        return Kernel(self.K[np.ix_(perm, perm)], tuple(self.emissions[i] for i in perm), self.cond)


def kernel(emissions: Sequence[EmissionParam]) -> Kernel:
    """Pairwise L2 inner products of Gaussian densities (closed form)."""
    ems = tuple(emissions)
    m = len(ems)
    if m == 0:
        raise ValidationError("kernel needs at least one emission")
    for i in range(m):
        for j in range(i + 1, m):
            if ems[i].same_as(ems[j]):
                raise ValidationError(f"emissions {i} and {j} coincide; kernel would be singular")
    mu = np.array([e.mean for e in ems])
    var = np.array([e.var for e in ems])
    s = var[:, None] + var[None, :]
    K = np.exp(-((mu[:, None] - mu[None, :]) ** 2) / (2.0 * s)) / np.sqrt(2.0 * np.pi * s)
    K = 0.5 * (K + K.T)
    try:
        cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("kernel matrix is not positive definite") from exc
    cond = float(np.linalg.cond(K))
    if cond > KERNEL_COND_WARN:
        warnings.warn(f"kernel condition number {cond:.3g}; moment noise is strongly amplified",
                      RuntimeWarning, stacklevel=2)
    return Kernel(K, ems, cond)


@dataclass(frozen=True, eq=False)
class MomentSet:
    lag: np.ndarray        # (3, m, m)
    triple: np.ndarray     # (m, m, m), triple[c]
    M: np.ndarray          # (3, m, m) kernel-free lag moments
    G: np.ndarray          # (m, m, m) kernel-free triples
    dM2: np.ndarray
    dM3: np.ndarray
    dG: np.ndarray         # (m, m, m)
    provenance: str        # "population" or "empirical"
    T: Optional[int] = None

    @property
    def m(self) -> int:
        return self.dM2.shape[0]

    @property
    def M1(self):
        return self.M[0]

    def permuted(self, perm) -> "MomentSet":
        """Relabel the distinct components: new index k is old index ``perm[k]``."""
        p = np.asarray(perm)
        ix2 = np.ix_(p, p)
        ix3 = np.ix_(p, p, p)
        return MomentSet(
            lag=self.lag[:, p][:, :, p], triple=self.triple[ix3],
            M=self.M[:, p][:, :, p], G=self.G[ix3],
            dM2=self.dM2[ix2], dM3=self.dM3[ix2], dG=self.dG[ix3],
            provenance=self.provenance, T=self.T,
        )

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "T": self.T,
            "lag_moments": self.lag.tolist(),
            "triple_moments": self.triple.tolist(),
            "M": self.M.tolist(),
            "G": self.G.tolist(),
            "dM2": self.dM2.tolist(),
            "dM3": self.dM3.tolist(),
            "dG": self.dG.tolist(),
        }


def kernel_free(X, kern: Kernel, pi_merged):
    """``K^-1 X K^-1 diag(pi)^-1``; X may carry leading batch axes."""
    X = np.asarray(X, dtype=float)
    pi = np.asarray(pi_merged, dtype=float)
    if np.any(pi <= 0):
        raise ValidationError("merged stationary weights must be positive")
    Ki = kern.solve(np.eye(kern.m))
    return Ki @ X @ Ki / pi


def _finish(lag, triple, kern, pi_merged, provenance, T=None) -> MomentSet:
    K = kern.K
    M = kernel_free(lag, kern, pi_merged)
    G = kernel_free(triple, kern, pi_merged)
    M1, M2, M3 = M
    dM2 = M2 - M1 @ M1
    dM3 = M3 - M2 @ M1 - M1 @ M2 + M1 @ M1 @ M1
    dG = G - np.einsum("ik,kc,kj->cij", M1, K, M1)
    return MomentSet(lag, triple, M, G, dM2, dM3, dG, provenance, T)


def population_moments(h: Hmm, beta=None, pi_merged=None, kern: Optional[Kernel] = None) -> MomentSet:
    """Closed-form moments of a stationary model (aliased or not)."""
    n = h.n
    if beta is None or pi_merged is None:
        st = stationary(h)
        beta = st.beta if beta is None else beta
        pi_merged = st.pi_merged if pi_merged is None else pi_merged
    kern = kern or kernel(h.unique_emissions)
    if h.aliased:
        B, C = projection(n), lifting(n, beta)
    else:
        B = C = np.eye(n)
    pi_merged = np.asarray(pi_merged, dtype=float)
    K = kern.K
    A = h.A
    right = C * pi_merged[None, :] @ K  # C diag(pi) K
    lag = np.empty((LAGS, kern.m, kern.m))
    At = np.eye(n)
    for t in range(LAGS):
        At = A @ At
        lag[t] = K @ B @ At @ right
    KL = B.T @ K  # column c is the lifted kernel column
    left = K @ B @ A
    AR = A @ right
    triple = np.einsum("ik,kc,kj->cij", left, KL, AR)
    return _finish(lag, triple, kern, pi_merged, "population")


class MomentAccumulator:
    """Single-pass accumulation of lagged products of emission densities.

    Feed the output sequence in chunks with :meth:`update`; only the last
    three density rows are carried between chunks.
    """

    def __init__(self, kern: Kernel):
        self.kern = kern
        m = kern.m
        self.T = 0
        self.lag_sums = np.zeros((LAGS, m, m))
        self.triple_sum = np.zeros((m, m, m))
        self._tail = np.zeros((0, m))

    def update(self, y_chunk):
        F_new = density_matrix(self.kern.emissions, np.asarray(y_chunk, dtype=float).ravel())
        if F_new.shape[0] == 0:
            return self
        F = np.vstack([self._tail, F_new])
        k = self._tail.shape[0]
        N = F.shape[0]
        for t in range(1, LAGS + 1):
            start = max(k, t)  # later index must be a new row
            if start < N:
                self.lag_sums[t - 1] += F[start:].T @ F[start - t:N - t]
        start = max(k, 2)
        if start < N:
            self.triple_sum += np.einsum("li,lc,lj->cij", F[start:], F[start - 1:N - 1], F[start - 2:N - 2])
        self._tail = F[-LAGS:].copy()
        self.T += F_new.shape[0]
        return self

    def lag_moment(self, t: int) -> np.ndarray:
        if self.T <= t:
            raise SequenceTooShortError(f"lag {t} needs more than {t} observations, got {self.T}")
        return self.lag_sums[t - 1] / (self.T - t)

    def triple_moment(self) -> np.ndarray:
        if self.T <= 2:
            raise SequenceTooShortError(f"third order moments need T > 2, got {self.T}")
        return self.triple_sum / (self.T - 2)

    def finalize(self, pi_merged) -> MomentSet:
        if self.T < MIN_T:
            raise SequenceTooShortError(f"need at least {MIN_T} observations, got {self.T}")
        lag = np.stack([self.lag_moment(t) for t in range(1, LAGS + 1)])
        return _finish(lag, self.triple_moment(), self.kern, pi_merged, "empirical", self.T)


def empirical_moments(y, emissions=None, pi_merged=None, kern: Optional[Kernel] = None,
                      chunk: int = 65536) -> MomentSet:
    """Moments estimated from one output sequence in a single chunked pass."""
    if kern is None:
        if emissions is None:
            raise ValidationError("either emissions or a kernel is required")
        kern = kernel(emissions)
    if pi_merged is None:
        raise ValidationError("merged stationary weights are required")
    pi_merged = np.asarray(pi_merged, dtype=float)
    if pi_merged.shape != (kern.m,):
        raise ValidationError(f"weights of length {pi_merged.shape} for {kern.m} components")
    y = np.asarray(y, dtype=float).ravel()
    if y.size < MIN_T:
        raise SequenceTooShortError(f"need at least {MIN_T} observations, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("output sequence contains non-finite values")
    acc = MomentAccumulator(kern)
    for s in range(0, y.size, chunk):
        acc.update(y[s:s + chunk])
    return acc.finalize(pi_merged)


def rank_one_gap(ms: MomentSet):
    """Singular values of ``dM2`` (diagnostic)."""
    s = np.linalg.svd(ms.dM2, compute_uv=False)
    if not np.all(np.isfinite(s)):
        raise DegenerateMomentError("non-finite moment matrix")
    return s
