"""Detect aliasing, pick the aliased component and rebuild the full transition matrix."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateMomentError, SequenceTooShortError, ValidationError
from .moments import MIN_T, Kernel, MomentSet, empirical_moments, kernel

DEFAULT_C_H = 2.0
DEFAULT_EXPONENT = 1.0 / 3.0
GRID = 200
GAMMA_FLOOR = 1e-3
NM_ITER = 200
NM_TOL = 1e-8


@dataclass(frozen=True)
class DetectionResult:
    sigma_hat: float
    threshold: float
    aliased: bool
    u_hat: np.ndarray
    v_hat: np.ndarray
    singular_values: np.ndarray

    @property
    def verdict(self) -> str:
        return "2-aliased" if self.aliased else "non-aliased"

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "sigma_hat": self.sigma_hat,
            "threshold": self.threshold,
            "u_hat": self.u_hat.tolist(),
            "v_hat": self.v_hat.tolist(),
            "singular_values": self.singular_values.tolist(),
        }


def threshold(T, c_h=DEFAULT_C_H, exponent=DEFAULT_EXPONENT) -> float:
    return float(c_h * float(T) ** (-exponent))


def detect(ms: MomentSet, T=None, c_h=DEFAULT_C_H, exponent=DEFAULT_EXPONENT) -> DetectionResult:
    """Rank test on ``dM2``: aliased iff its top singular value reaches ``c_h * T^-exponent``."""
    T = ms.T if T is None else T
    if T is None:
        raise ValidationError("sequence length is required for the detection threshold")
    h_T = threshold(T, c_h, exponent)
    m = ms.m
    if not np.any(ms.dM2):
        e = np.zeros(m)
        e[-1] = 1.0
        return DetectionResult(0.0, h_T, False, e, e.copy(), np.zeros(m))
    U, s, Vt = np.linalg.svd(ms.dM2)
    sig = float(s[0])
    return DetectionResult(sig, h_T, sig >= h_T, U[:, 0].copy(), Vt[0].copy(), s)


def identify_component(ms: MomentSet, kern: Kernel):
    """Least-squares choice of the aliased component; returns (index, scores, tied)."""
    K = kern.K
    diff = ms.dG[None, :, :, :] - K[:, :, None, None] * ms.dM2[None, None, :, :]
    scores = np.einsum("icjk,icjk->i", diff, diff)
    best = int(np.argmin(scores))
    scale = max(float(scores.max()), 1e-300)
    tied = np.nonzero(scores - scores[best] <= 1e-12 * scale)[0]
    if len(tied) > 1:
        warnings.warn(f"aliased component scores tie between {tied.tolist()}; using {best}",
                      RuntimeWarning, stacklevel=2)
    return best, scores, len(tied) > 1


def estimate_kappa(ms: MomentSet) -> float:
    nrm = float(np.sum(ms.dM2 * ms.dM2))
    if nrm == 0.0:
        raise DegenerateMomentError("kappa is undefined when dM2 vanishes")
    return float(np.sum(ms.dM3 * ms.dM2) / nrm)


def _scaled_candidate(gam, bet, Abar, u, v, kappa, sigma):
    """``gam * A'(gam, bet)`` broadcast over array-valued gam, bet -> (..., n, n)."""
    gam = np.asarray(gam, dtype=float)
    bet = np.asarray(bet, dtype=float)
    shape = np.broadcast_shapes(gam.shape, bet.shape)
    gam = np.broadcast_to(gam, shape)[..., None, None]
    bet = np.broadcast_to(bet, shape)[..., None]
    m = Abar.shape[0]
    n = m + 1
    # lift rows with C_beta, duplicate the merged column with B
    AB = np.concatenate([Abar, Abar[:, -1:]], axis=1)
    lifted = np.empty(shape + (n, n))
    lifted[..., : m - 1, :] = AB[: m - 1]
    lifted[..., m - 1, :] = bet * AB[m - 1]
    lifted[..., m, :] = (1 - bet) * AB[m - 1]
    Cu = np.empty(shape + (n,))
    Cu[..., : m - 1] = u[: m - 1]
    Cu[..., m - 1:m] = bet * u[m - 1]
    Cu[..., m:] = (1 - bet) * u[m - 1]
    c = np.zeros(shape + (n,))
    c[..., n - 2:n - 1] = 1 - bet
    c[..., n - 1:] = -bet
    b = np.zeros(n)
    b[-2:] = (1.0, -1.0)
    vB = np.append(v, v[-1])
    out = gam * lifted + gam ** 2 * Cu[..., :, None] * c[..., None, :]
    return out + sigma * np.outer(b, vB) + gam * kappa * b[:, None] * c[..., None, :]


def _objective(gam, bet, Abar, u, v, kappa, sigma):
    X = _scaled_candidate(gam, bet, Abar, u, v, kappa, sigma)
    return X.reshape(X.shape[:-2] + (-1,)).min(axis=-1)


@dataclass(frozen=True)
class GammaBetaFit:
    gamma: float
    beta: float
    objective: float
    sign: int  # +1 if (u, v) was used, -1 if (-u, -v)
    grid_best: float


def _refine(x0, lo, hi, args):
    box = np.array([[lo, hi], [0.0, 1.0]])

    def neg(x):
        x = np.clip(x, box[:, 0], box[:, 1])
        return -float(_objective(x[0], x[1], *args))

    res = minimize(neg, x0, method="Nelder-Mead",
                   options={"maxiter": NM_ITER, "xatol": NM_TOL, "fatol": NM_TOL})
    x = np.clip(res.x, box[:, 0], box[:, 1])
    fx = -neg(x)
    if -neg(x0) > fx:
        x, fx = np.asarray(x0, float), -neg(x0)

    # polish: maximise t subject to every scaled entry >= t
    def cons(z):
        X = _scaled_candidate(z[0], z[1], *args)
        return X.ravel() - z[2]

    z0 = np.array([x[0], x[1], fx])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pol = minimize(lambda z: -z[2], z0, method="SLSQP",
                           bounds=[tuple(box[0]), tuple(box[1]), (None, None)],
                           constraints=[{"type": "ineq", "fun": cons}],
                           options={"maxiter": 200, "ftol": 1e-14})
        zp = np.clip(pol.x[:2], box[:, 0], box[:, 1])
        fp = -neg(zp)
        if fp >= fx:
            x, fx = zp, fp
    except (ValueError, np.linalg.LinAlgError):
        pass
    return x, fx


def estimate_gamma_beta(Abar, kappa, sigma, u, v, grid: int = GRID) -> GammaBetaFit:
    """Maximise the smallest scaled entry of the rebuilt matrix over (gamma, beta)."""
    if not sigma > 0:
        raise DegenerateMomentError("gamma/beta search needs a positive singular value")
    Abar = np.asarray(Abar, float)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    lo, hi = sigma * GAMMA_FLOOR, 2.0 / sigma
    gs = np.linspace(lo, hi, grid)
    bs = np.linspace(0.0, 1.0, grid)
    G, Bt = np.meshgrid(gs, bs, indexing="ij")
    best = None
    for sign in (1, -1):
        args = (Abar, sign * u, sign * v, kappa, sigma)
        vals = _objective(G, Bt, *args)
        order = np.argsort(vals.ravel())[::-1][:3]
        for k in order:
            i, j = np.unravel_index(k, vals.shape)
            x, fx = _refine(np.array([gs[i], bs[j]]), lo, hi, args)
            if best is None or fx > best.objective:
                best = GammaBetaFit(float(x[0]), float(x[1]), float(fx), sign, float(vals[i, j]))
    return best


def project_stochastic(X):
    """Clip negatives and renormalise columns; returns (matrix, negativity mass)."""
    X = np.array(X, dtype=float)
    neg = float(-X[X < 0].sum())
    X[X < 0] = 0.0
    s = X.sum(axis=0)
    zero = s <= 0
    X[:, zero] = 1.0 / X.shape[0]
    s[zero] = 1.0
    return X / s, neg


def assemble(Abar, gamma, beta, kappa, sigma, u, v):
    """Four-term rebuild followed by stochastic projection; returns (A_hat, negativity mass)."""
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    raw = _scaled_candidate(gamma, beta, np.asarray(Abar, float), np.asarray(u, float),
                            np.asarray(v, float), kappa, sigma) / gamma
    return project_stochastic(raw)


@dataclass
class LearnReport:
    detection: DetectionResult
    branch: str
    A_hat: np.ndarray
    projection_mass: float
    aliased_component: Optional[int] = None
    component_scores: Optional[np.ndarray] = None
    kappa_hat: Optional[float] = None
    gamma_hat: Optional[float] = None
    beta_hat: Optional[float] = None
    objective: Optional[float] = None
    state_components: tuple = ()
    timing_ms: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        def opt(x):
            return None if x is None else (x.tolist() if isinstance(x, np.ndarray) else x)

        return {
            "detection": self.detection.to_dict(),
            "branch": self.branch,
            "aliased_component": self.aliased_component,
            "component_scores": opt(self.component_scores),
            "kappa_hat": self.kappa_hat,
            "gamma_hat": self.gamma_hat,
            "beta_hat": self.beta_hat,
            "objective": self.objective,
            "state_components": list(self.state_components),
            "A_hat": self.A_hat.tolist(),
            "projection_mass": self.projection_mass,
            "timing_ms": dict(self.timing_ms),
            "warnings": list(self.warnings),
        }


def learn_from_moments(ms: MomentSet, kern: Kernel, T=None, c_h=DEFAULT_C_H,
                       exponent=DEFAULT_EXPONENT, branch: str = "auto",
                       timing: Optional[dict] = None) -> LearnReport:
    """Run detection and, on the aliased branch, the full reconstruction.

    ``branch`` forces "aliased" or "non-aliased" regardless of the test;
    detection is still reported.  The returned ``A_hat`` lists states as the
    distinct components in their given order with the aliased component's two
    copies moved to the end; ``state_components[k]`` names the component of
    state k.
    """
    if branch not in ("auto", "aliased", "non-aliased"):
        raise ValidationError(f"unknown branch {branch!r}")
    timing = dict(timing or {})
    t0 = time.perf_counter()
    det = detect(ms, T=T if T is not None else (ms.T if ms.T is not None else np.inf), c_h=c_h, exponent=exponent)
    timing["detect"] = 1e3 * (time.perf_counter() - t0)
    go_aliased = det.aliased if branch == "auto" else branch == "aliased"
    m = ms.m
    if not go_aliased:
        A_hat, mass = project_stochastic(ms.M1)
        return LearnReport(det, "non-aliased", A_hat, mass, state_components=tuple(range(m)), timing_ms=timing)

    msgs = []
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        comp, scores, _ = identify_component(ms, kern)
    msgs += [str(w.message) for w in caught]
    timing["identify"] = 1e3 * (time.perf_counter() - t0)
    perm = [i for i in range(m) if i != comp] + [comp]
    mp = ms.permuted(perm)
    if det.sigma_hat == 0.0:
        raise DegenerateMomentError("aliased branch requested but dM2 vanishes")
    U, s, Vt = np.linalg.svd(mp.dM2)
    sigma, u, v = float(s[0]), U[:, 0], Vt[0]

    t0 = time.perf_counter()
    kap = estimate_kappa(mp)
    fit = estimate_gamma_beta(mp.M1, kap, sigma, u, v)
    timing["gamma_beta"] = 1e3 * (time.perf_counter() - t0)
    A_hat, mass = assemble(mp.M1, fit.gamma, fit.beta, kap, sigma, fit.sign * u, fit.sign * v)
    beta_hat = fit.beta
    # the two aliased labels are interchangeable; keep the one entered more often first
    if A_hat[-2:, -2].sum() < A_hat[-2:, -1].sum():
        order = list(range(m - 1)) + [m, m - 1]
        A_hat = A_hat[np.ix_(order, order)]
        beta_hat = 1.0 - beta_hat
    return LearnReport(
        det, "aliased", A_hat, mass,
        aliased_component=comp, component_scores=scores, kappa_hat=kap,
        gamma_hat=fit.gamma, beta_hat=beta_hat, objective=fit.objective,
        state_components=tuple(perm) + (comp,), timing_ms=timing, warnings=msgs,
    )


def learn(y, emissions, pi_merged=None, c_h=DEFAULT_C_H, exponent=DEFAULT_EXPONENT,
          branch: str = "auto") -> LearnReport:
    """End-to-end estimate from an output sequence with known distinct emissions.

    When ``pi_merged`` is omitted it is fitted by weights-only mixture EM.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size < MIN_T:
        raise SequenceTooShortError(f"need at least {MIN_T} observations, got {y.size}")
    timing = {}
    t0 = time.perf_counter()
    kern = kernel(emissions)
    if pi_merged is None:
        from .baselines import mixture_weights_em

        pi_merged = mixture_weights_em(y, kern.emissions)
    pi_merged = np.asarray(pi_merged, dtype=float)
    if np.any(pi_merged <= 0):
        raise ValidationError("merged stationary weights must be positive")
    ms = empirical_moments(y, pi_merged=pi_merged, kern=kern)
    timing["moments"] = 1e3 * (time.perf_counter() - t0)
    rep = learn_from_moments(ms, kern, T=y.size, c_h=c_h, exponent=exponent, branch=branch, timing=timing)
    rep.timing_ms["total"] = 1e3 * (time.perf_counter() - t0)
    return rep
