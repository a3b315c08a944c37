"""Baum-Welch for Gaussian-emission HMMs and weights-only mixture EM."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._kernels import forward_backward
from .errors import NumericalError, SequenceTooShortError, ValidationError
from .hmm import EmissionParam, Hmm, density_matrix, stationary_vector

INIT_MODES = ("random", "from-model", "exact-emissions")


@dataclass(frozen=True)
class BwConfig:
    """Baum-Welch settings.

    ``random``: flat-Dirichlet transition columns, means drawn from the data,
    global variance.  ``from-model``: start at ``model``.  ``exact-emissions``:
    random transitions with ``emissions`` fixed.  ``freeze_emissions``
    defaults to True only for ``exact-emissions``.
    """

    iterations: int = 20
    init: str = "random"
    seed: Optional[int] = None
    model: Optional[Hmm] = None
    emissions: Optional[tuple] = None
    var_floor: float = 1e-4
    freeze_emissions: Optional[bool] = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("iterations must be at least 1")
        if self.init not in INIT_MODES:
            raise ValidationError(f"unknown init mode {self.init!r}")
        if self.init == "from-model" and self.model is None:
            raise ValidationError("from-model init needs a model")
        if self.init == "exact-emissions" and self.emissions is None:
            raise ValidationError("exact-emissions init needs emission parameters")
        if not self.var_floor > 0:
            raise ValidationError("variance floor must be positive")

    @property
    def frozen(self) -> bool:
        if self.freeze_emissions is not None:
            return self.freeze_emissions
        return self.init == "exact-emissions"


@dataclass
class BwResult:
    model: Hmm
    A: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    initial: np.ndarray
    trace: list
    floor_active: bool = False
    notes: list = field(default_factory=list)


def _init_params(y, n, cfg: BwConfig):
    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "from-model":
        h = cfg.model
        if h.n != n:
            raise ValidationError(f"initial model has {h.n} states, expected {n}")
        A = np.array(h.A, dtype=float)
        mu = np.array([e.mean for e in h.emissions])
        var = np.array([e.var for e in h.emissions])
        try:
            p0 = stationary_vector(A) if h.initial is None else np.array(h.initial)
        except np.linalg.LinAlgError:
            p0 = np.full(n, 1.0 / n)
        p0 = np.clip(p0, 0, None)
        p0 = p0 / p0.sum() if p0.sum() > 0 else np.full(n, 1.0 / n)
        return A, mu, var, p0
    A = rng.dirichlet(np.ones(n), size=n).T
    if cfg.init == "exact-emissions":
        ems = tuple(cfg.emissions)
        if len(ems) != n:
            raise ValidationError(f"{len(ems)} emissions for {n} states")
        mu = np.array([e.mean for e in ems])
        var = np.array([e.var for e in ems])
    else:
        mu = rng.choice(y, size=n, replace=False) if y.size >= n else rng.choice(y, size=n)
        var = np.full(n, max(float(np.var(y)), cfg.var_floor))
    return A, mu, var, np.full(n, 1.0 / n)


def baum_welch(y, n: int, cfg: BwConfig = BwConfig()) -> BwResult:
    """EM fit of an n-state Gaussian HMM; ``trace`` holds one log-likelihood per E-step.

    The trace has ``iterations + 1`` entries: the last one scores the final
    parameters.
    """
    y = np.asarray(y, dtype=float).ravel()
    if n < 1:
        raise ValidationError("n must be at least 1")
    if y.size < max(n, 2):
        raise SequenceTooShortError(f"need at least {max(n, 2)} observations, got {y.size}")
    A, mu, var, p0 = _init_params(y, n, cfg)
    frozen = cfg.frozen
    floor_hit = False
    trace = []
    for it in range(cfg.iterations + 1):
        dens = density_matrix([EmissionParam(m_, v_) for m_, v_ in zip(mu, var)], y)
        ll, gamma, xi, min_scale = forward_backward(A, p0, dens)
        if not np.isfinite(ll) or min_scale <= 0.0:
            raise NumericalError(f"forward pass underflowed at iteration {it}")
        trace.append(float(ll))
        if it == cfg.iterations:
            break
        col = xi.sum(axis=0)
        ok = col > 0
        A = A.copy()
        A[:, ok] = xi[:, ok] / col[ok]
        p0 = gamma[0] / gamma[0].sum()
        if not frozen:
            w = gamma.sum(axis=0)
            good = w > 0
            mu = mu.copy()
            var = var.copy()
            mu[good] = (gamma[:, good] * y[:, None]).sum(axis=0) / w[good]
            v_new = (gamma[:, good] * (y[:, None] - mu[good]) ** 2).sum(axis=0) / w[good]
            floor_hit |= bool(np.any(v_new < cfg.var_floor))
            var[good] = np.maximum(v_new, cfg.var_floor)

    ems = [EmissionParam(m_, v_) for m_, v_ in zip(mu, var)]
    pair = None
    if n >= 2 and ems[-2].same_as(ems[-1]):
        pair = (n - 2, n - 1)
    model = Hmm(A, ems, aliased_pair=pair) if (pair or _no_coincidence(ems)) else None
    notes = ["variance floor active"] if floor_hit else []
    return BwResult(model, A, mu, var, p0, trace, floor_hit, notes)


def _no_coincidence(ems):
    return not any(ems[i].same_as(ems[j]) for i in range(len(ems)) for j in range(i + 1, len(ems)))


def mixture_weights_em(y, emissions: Sequence[EmissionParam], iterations: int = 200,
                       tol: float = 1e-8, return_trace: bool = False):
    """Fit only the weights of a mixture with known components by EM."""
    ems = tuple(emissions)
    if not _no_coincidence(ems):
        raise ValidationError("mixture components must be distinct")
    y = np.asarray(y, dtype=float).ravel()
    k = len(ems)
    w = np.full(k, 1.0 / k)
    trace = []
    if k == 1:
        w = np.ones(1)
        return (w, trace) if return_trace else w
    F = density_matrix(ems, y)
    prev = -np.inf
    for _ in range(iterations):
        mix = np.maximum(F @ w, 1e-300)
        ll = float(np.sum(np.log(mix)))
        trace.append(ll)
        w = w * (F / mix[:, None]).mean(axis=0)
        w /= w.sum()
        if ll - prev < tol * max(1.0, abs(ll)):
            break
        prev = ll
    return (w, trace) if return_trace else w
