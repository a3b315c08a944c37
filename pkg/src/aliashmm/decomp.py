"""Split a 2-aliased transition matrix into merged, exit, entry and internal parts.

All functions assume the aliased pair occupies the last two indices.  The
lifting and projection operators are built explicitly so the four-term
reconstruction can be checked term by term::

    A = C_b Abar B + C_b d_out c_b^T + b d_in^T B + kappa b c_b^T
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# P(nbar | j) at or below this counts as outside the entry support.
SUPPORT_TOL = 1e-14


def _check_beta(beta):
    if not (0.0 <= beta <= 1.0):
        raise ValidationError(f"beta must lie in [0, 1], got {beta}")


def _square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
        raise ValidationError(f"expected a square matrix with n >= 2, got shape {A.shape}")
    return A


def projection(n: int) -> np.ndarray:
    """B: (n-1) x n, sums the last two coordinates."""
    B = np.zeros((n - 1, n))
    B[: n - 2, : n - 2] = np.eye(n - 2)
    B[n - 2, n - 2:] = 1.0
    return B


def lifting(n: int, beta: float) -> np.ndarray:
    """C_beta: n x (n-1), splits the merged coordinate as (beta, 1 - beta)."""
    C = np.zeros((n, n - 1))
    C[: n - 2, : n - 2] = np.eye(n - 2)
    C[n - 2, n - 2] = beta
    C[n - 1, n - 2] = 1.0 - beta
    return C


def b_vec(n: int) -> np.ndarray:
    b = np.zeros(n)
    b[-2:] = (1.0, -1.0)
    return b


def c_vec(n: int, beta: float) -> np.ndarray:
    c = np.zeros(n)
    c[-2:] = (1.0 - beta, -beta)
    return c


def merge(A, beta: float) -> np.ndarray:
    """Merged (n-1)x(n-1) chain ``B A C_beta``."""
    A = _square(A)
    _check_beta(beta)
    n = A.shape[0]
    return projection(n) @ A @ lifting(n, beta)


def entry_mass(A) -> np.ndarray:
    """P(nbar | j) for every column j."""
    A = np.asarray(A, dtype=float)
    return A[-2] + A[-1]


def relative_entry(A) -> np.ndarray:
    """alpha_j = P(n-1 | j) / P(nbar | j) on the entry support, 0 elsewhere."""
    A = _square(A)
    into = entry_mass(A)
    alpha = np.zeros(A.shape[0])
    supp = into > SUPPORT_TOL
    alpha[supp] = A[-2, supp] / into[supp]
    return alpha


def exit_difference(A) -> np.ndarray:
    """delta_out: column n-1 minus column n of ``B A``."""
    BA = projection(A.shape[0]) @ A
    return BA[:, -2] - BA[:, -1]


@dataclass(frozen=True)
class AliasDecomposition:
    A_merged: np.ndarray
    beta: float
    alpha: np.ndarray
    delta_out: np.ndarray
    delta_in: np.ndarray
    kappa: float

    @property
    def n(self) -> int:
        return self.A_merged.shape[0] + 1

    def to_dict(self):
        return {
            "A_merged": self.A_merged.tolist(),
            "beta": self.beta,
            "alpha": self.alpha.tolist(),
            "delta_out": self.delta_out.tolist(),
            "delta_in": self.delta_in.tolist(),
            "kappa": self.kappa,
        }


def decompose(A, beta: float) -> AliasDecomposition:
    A = _square(A)
    _check_beta(beta)
    n = A.shape[0]
    alpha = relative_entry(A)
    into = entry_mass(A)
    d_out = exit_difference(A)
    d_in = np.empty(n - 1)
    d_in[: n - 2] = (alpha[: n - 2] - beta) * into[: n - 2]
    d_in[n - 2] = beta * (alpha[n - 2] - beta) * into[n - 2] + (1 - beta) * (alpha[n - 1] - beta) * into[n - 1]
    kappa = (alpha[n - 2] - beta) * into[n - 2] - (alpha[n - 1] - beta) * into[n - 1]
    return AliasDecomposition(merge(A, beta), float(beta), alpha, d_out, d_in, float(kappa))


def reconstruction_terms(d: AliasDecomposition):
    """The four matrices whose sum is the transition matrix."""
    n = d.n
    if d.delta_out.shape != (n - 1,) or d.delta_in.shape != (n - 1,):
        raise ValidationError("decomposition components have inconsistent dimensions")
    B, C = projection(n), lifting(n, d.beta)
    b, c = b_vec(n), c_vec(n, d.beta)
    return (
        C @ d.A_merged @ B,
        np.outer(C @ d.delta_out, c),
        np.outer(b, B.T @ d.delta_in),
        d.kappa * np.outer(b, c),
    )


def reconstruct(d: AliasDecomposition) -> np.ndarray:
    t1, t2, t3, t4 = reconstruction_terms(d)
    return t1 + t2 + t3 + t4
