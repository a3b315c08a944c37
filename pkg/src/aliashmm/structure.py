"""Minimality, feasible region of equivalent models, and strict identifiability.

Coordinates: ``(t_hi, t_lo)`` are the two free entries of the similarity
matrix acting on the aliased pair; ``(1, 0)`` is the model itself.  The
diagram analysis works in offsets ``(d_hi, d_lo) = (t_hi - 1, t_lo)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .decomp import SUPPORT_TOL, decompose, entry_mass, exit_difference, projection, relative_entry
from .errors import NonMinimalError, NotAliasedError, ValidationError
from .hmm import Hmm, stationary, stationary_vector

ZERO_TOL = 1e-14
MINIMAL_TOL = 1e-12
# Entries this close to a structural value but not within ZERO_TOL get a warning.
FRAGILE_TOL = 1e-8


@dataclass(frozen=True)
class MinimalityVerdict:
    minimal: bool
    case: str  # "stationary-start" / "non-stationary-start"
    norm_delta_out: float
    norm_delta_in: float
    failed: tuple = ()

    def to_dict(self):
        return {
            "minimal": self.minimal,
            "case": self.case,
            "norm_delta_out": self.norm_delta_out,
            "norm_delta_in": self.norm_delta_in,
            "failed": list(self.failed),
        }


def is_minimal(h: Hmm, initial=None) -> MinimalityVerdict:
    """Decide minimality of a 2-aliased model.

    With an initial distribution that puts mass on the aliased pair in a
    ratio other than the stationary one, only the exit difference matters;
    otherwise (including the stationary start) both the exit and entry
    differences must be non-zero.
    """
    if not h.aliased:
        raise NotAliasedError("minimality test needs a 2-aliased model")
    st = stationary(h)
    d = decompose(h.A, st.beta)
    no = float(np.max(np.abs(d.delta_out)))
    ni = float(np.max(np.abs(d.delta_in)))

    init = h.initial if initial is None else np.asarray(initial, dtype=float)
    case = "stationary-start"
    if init is not None:
        mass = init[-2] + init[-1]
        if mass > ZERO_TOL and abs(init[-2] / mass - st.beta) > MINIMAL_TOL:
            case = "non-stationary-start"

    failed = []
    if no < MINIMAL_TOL:
        failed.append("delta_out")
    if case == "stationary-start" and ni < MINIMAL_TOL:
        failed.append("delta_in")
    return MinimalityVerdict(not failed, case, no, ni, tuple(failed))


def similarity_transform(A, tau_hi, tau_lo) -> np.ndarray:
    """``S(tau)^-1 A S(tau)``; broadcasts over array-valued ``tau_hi``, ``tau_lo``.

    Column sums are preserved, entries may turn negative.
    """
    A = np.asarray(A, dtype=float)
    t1 = np.asarray(tau_hi, dtype=float)
    t2 = np.asarray(tau_lo, dtype=float)
    if np.any(t1 <= t2):
        raise ValidationError("similarity transform needs tau_hi > tau_lo")
    t1, t2 = np.broadcast_arrays(t1, t2)
    out = np.broadcast_to(A, t1.shape + A.shape).copy()
    a, b = A[:, -2], A[:, -1]
    t1e, t2e = t1[..., None], t2[..., None]
    out[..., :, -2] = a * t1e + b * (1 - t1e)
    out[..., :, -1] = a * t2e + b * (1 - t2e)
    r1 = out[..., -2, :].copy()
    r2 = out[..., -1, :].copy()
    det = (t1 - t2)[..., None]
    out[..., -2, :] = ((1 - t2e) * r1 - t2e * r2) / det
    out[..., -1, :] = (-(1 - t1e) * r1 + t1e * r2) / det
    return out


def swap_aliased(A) -> np.ndarray:
    A = np.array(A, dtype=float)
    order = list(range(A.shape[0] - 2)) + [A.shape[0] - 1, A.shape[0] - 2]
    return A[np.ix_(order, order)]


def canonical_orientation(A):
    """Swap aliased labels so that P(nbar | n-1) >= P(nbar | n).  Returns (A, swapped)."""
    A = np.asarray(A, dtype=float)
    into = entry_mass(A)
    if into[-2] < into[-1]:
        return swap_aliased(A), True
    return A, False


def _require_minimal(A):
    A = np.asarray(A, dtype=float)
    pi = stationary_vector(A)
    beta = pi[-2] / (pi[-2] + pi[-1])
    d = decompose(A, beta)
    if np.max(np.abs(d.delta_out)) < MINIMAL_TOL or np.max(np.abs(d.delta_in)) < MINIMAL_TOL:
        raise NonMinimalError("feasible-region analysis requires a minimal model")


@dataclass
class FeasibleRegion:
    """Closed-form description of the set of ``(t_hi, t_lo)`` giving equivalent models.

    ``tau_min_hi``/``tau_max_hi`` bound ``t_hi`` and ``tau_max_lo``/``tau_min_lo``
    bound ``t_lo`` (rectangle Gamma1).  ``branch`` is ``"gamma2"`` when
    alpha_{n-1} >= alpha_n and ``"gamma3"`` otherwise.
    """

    A: np.ndarray
    swapped: bool
    tau_min_hi: float
    tau_max_hi: float
    tau_min_lo: float
    tau_max_lo: float
    tau_minus: Optional[float]
    tau_plus: Optional[float]
    tau0: Optional[float]
    branch: str
    degenerate: bool
    trivial_block: bool
    alpha_hi: float
    alpha_lo: float
    curve: dict
    singleton: bool = False
    warnings: list = field(default_factory=list)

    # -- boundary curves --------------------------------------------------
    def g(self, t):
        t = np.asarray(t, dtype=float)
        c = self.curve
        if self.degenerate:
            return self.alpha_lo + t * (self.alpha_hi - self.alpha_lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            return c["pole_f"] - c["coef"] / (t - c["pole_g"])

    def f(self, t):
        t = np.asarray(t, dtype=float)
        c = self.curve
        if self.degenerate:
            with np.errstate(divide="ignore", invalid="ignore"):
                return (t - self.alpha_lo) / (self.alpha_hi - self.alpha_lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            return c["pole_g"] - c["coef"] / (t - c["pole_f"])

    def lo_interval(self, t_hi, tol=0.0):
        """Feasible ``t_lo`` interval ``(low, high)`` at each ``t_hi`` (empty when low > high)."""
        t = np.asarray(t_hi, dtype=float)
        lo = np.full(t.shape, self.tau_max_lo)
        hi = np.full(t.shape, self.tau_min_lo)
        bad = (t < self.tau_min_hi - tol) | (t > self.tau_max_hi + tol)
        if not self.trivial_block:
            if self.degenerate:
                if self.tau0 is not None:
                    bad |= t < self.tau0 - tol
                    hi = np.minimum(hi, self.tau0)
            else:
                bad |= t < self.tau_plus - tol
                lo = np.maximum(lo, self.tau_minus)
                hi = np.minimum(hi, self.tau_plus)
            if self.branch == "gamma3":
                lo = np.maximum(lo, self.f(t))
                hi = np.minimum(hi, self.g(t))
        lo = np.where(bad, np.inf, lo)
        hi = np.where(bad, -np.inf, hi)
        return lo, hi

    def contains(self, t_hi, t_lo, tol=1e-10):
        t1, t2 = np.broadcast_arrays(np.asarray(t_hi, float), np.asarray(t_lo, float))
        lo, hi = self.lo_interval(t1, tol)
        return (t1 > t2) & (t2 >= lo - tol) & (t2 <= hi + tol)

    def to_dict(self):
        def num(x):
            return None if x is None else (x if math.isfinite(x) else str(x))

        return {
            "swapped_aliased_labels": self.swapped,
            "tau_min_hi": num(self.tau_min_hi),
            "tau_max_hi": num(self.tau_max_hi),
            "tau_min_lo": num(self.tau_min_lo),
            "tau_max_lo": num(self.tau_max_lo),
            "tau_minus": num(self.tau_minus),
            "tau_plus": num(self.tau_plus),
            "tau0": num(self.tau0),
            "branch": self.branch,
            "degenerate": self.degenerate,
            "trivial_block": self.trivial_block,
            "curve": {k: num(v) for k, v in self.curve.items()},
            "singleton": self.singleton,
            "warnings": list(self.warnings),
        }


def brute_force_feasible(A, t_hi, t_lo, tol=1e-10):
    """Direct test ``A_H(t) >= -tol`` entrywise with ``t_hi > t_lo``."""
    t1, t2 = np.broadcast_arrays(np.asarray(t_hi, float), np.asarray(t_lo, float))
    ok = t1 > t2
    out = np.zeros(t1.shape, dtype=bool)
    if np.any(ok):
        AH = similarity_transform(A, t1[ok], t2[ok])
        out[ok] = np.all(AH >= -tol, axis=(-2, -1))
    return out


def feasible_region(A, check_minimal: bool = True) -> FeasibleRegion:
    """Closed-form feasible region of a minimal 2-aliased transition matrix."""
    A0 = np.asarray(A, dtype=float)
    if check_minimal:
        _require_minimal(A0)
    A, swapped = canonical_orientation(A0)
    n = A.shape[0]
    abar_n = (projection(n) @ A)[:, -1]
    d = exit_difference(A)
    alpha = relative_entry(A)
    into = entry_mass(A)
    P1, P2 = into[-2], into[-1]
    a1, a2 = alpha[-2], alpha[-1]

    # Gamma1 rectangle
    up, low = [], []
    for j in range(n - 2):
        if abs(d[j]) <= ZERO_TOL:
            continue
        s = math.copysign(1.0, d[j])
        up.append((0.5 * (1 + s) - abar_n[j]) / d[j])
        low.append((0.5 * (1 - s) - abar_n[j]) / d[j])
    tau_max_hi = min(up) if up else math.inf
    tau_max_lo = max(low) if low else -math.inf
    supp = [j for j in range(n - 2) if into[j] > SUPPORT_TOL]
    if not supp:
        raise ValidationError("no non-aliased state enters the aliased pair")
    tau_min_hi = float(max(alpha[supp]))
    tau_min_lo = float(min(alpha[supp]))

    branch = "gamma2" if a1 >= a2 else "gamma3"
    dn = d[-1]
    trivial = P1 <= ZERO_TOL
    degenerate = (not trivial) and abs(dn) <= ZERO_TOL
    tau_minus = tau_plus = tau0 = None
    curve = {}
    if not trivial and not degenerate:
        q = a1 * P1 - (1 + a2) * P2
        disc = q * q + 4 * a2 * P2 * dn
        sq = math.sqrt(max(disc, 0.0))
        tau_minus = (q - sq) / (2 * dn)
        tau_plus = (q + sq) / (2 * dn)
        curve = {
            "pole_g": float(-P2 / dn),
            "pole_f": float((a1 * P1 - a2 * P2) / dn),
            "coef": float(P1 * P2 * (a1 - a2) / dn ** 2),
        }
    elif degenerate:
        den = 1 - (a1 - a2)
        tau0 = a2 / den if abs(den) > ZERO_TOL else None

    reg = FeasibleRegion(
        A=A, swapped=swapped,
        tau_min_hi=tau_min_hi, tau_max_hi=float(tau_max_hi),
        tau_min_lo=tau_min_lo, tau_max_lo=float(tau_max_lo),
        tau_minus=None if tau_minus is None else float(tau_minus),
        tau_plus=None if tau_plus is None else float(tau_plus),
        tau0=None if tau0 is None else float(tau0),
        branch=branch, degenerate=bool(degenerate), trivial_block=bool(trivial),
        alpha_hi=float(a1), alpha_lo=float(a2), curve=curve,
    )
    reg.singleton = _scan_singleton(reg)
    return reg


def _scan_singleton(reg: FeasibleRegion, tol=1e-12) -> bool:
    """No feasible ``t_lo`` interval away from ``t_hi = 1`` and a point interval at 1."""
    lo1, hi1 = reg.lo_interval(np.array([1.0]))
    if hi1[0] - lo1[0] > tol:
        return False
    a = reg.tau_min_hi if math.isfinite(reg.tau_min_hi) else 1.0 - 10.0
    b = reg.tau_max_hi if math.isfinite(reg.tau_max_hi) else 1.0 + 10.0
    eps = np.logspace(-7, 1, 161)
    probes = np.concatenate([1 - eps, 1 + eps, np.linspace(a, b, 2001)])
    probes = probes[(probes >= a - tol) & (probes <= b + tol) & (np.abs(probes - 1) > 1e-9)]
    lo, hi = reg.lo_interval(probes)
    feasible = (hi >= lo - tol) & (lo < probes)
    return not bool(np.any(feasible))


def grid_disagreements(A, region: Optional[FeasibleRegion] = None, m: int = 400, tol=1e-10):
    """Count grid points where the closed form and the entrywise test disagree.

    The grid spans the Gamma1 rectangle padded by 0.5 on every side, in the
    canonical aliased orientation.
    """
    reg = region or feasible_region(A)
    x0 = reg.tau_min_hi - 0.5
    x1 = (reg.tau_max_hi if math.isfinite(reg.tau_max_hi) else reg.tau_min_hi + 5) + 0.5
    y0 = (reg.tau_max_lo if math.isfinite(reg.tau_max_lo) else reg.tau_min_lo - 5) - 0.5
    y1 = reg.tau_min_lo + 0.5
    T1, T2 = np.meshgrid(np.linspace(x0, x1, m), np.linspace(y0, y1, m), indexing="ij")
    analytic = reg.contains(T1, T2, tol=tol)
    brute = brute_force_feasible(reg.A, T1, T2, tol=tol)
    return int(np.count_nonzero(analytic != brute)), int(np.count_nonzero(brute))


# -- effective feasible region -------------------------------------------------

@dataclass(frozen=True)
class Diagram:
    """One local constraint set; each row ``(a, b, op)`` means ``a*d_hi + b*d_lo op 0``."""

    source: str
    trigger: str
    constraints: tuple

    @property
    def shape(self) -> str:
        return classify(list(self.constraints))

    def to_dict(self):
        return {
            "source": self.source,
            "trigger": self.trigger,
            "shape": self.shape,
            "constraints": [list(c) for c in self.constraints],
        }


@dataclass
class DiagramSet:
    diagrams: list
    classification: str
    swapped: bool
    warnings: list = field(default_factory=list)

    @property
    def identifiable(self) -> bool:
        return self.classification == "point"

    @property
    def constraints(self):
        return [c for d in self.diagrams for c in d.constraints]

    def to_dict(self):
        return {
            "diagrams": [d.to_dict() for d in self.diagrams],
            "classification": self.classification,
            "identifiable": self.identifiable,
            "swapped_aliased_labels": self.swapped,
            "warnings": list(self.warnings),
        }


GE = ">="
EQ = "=="
_LEFT = (-1.0, 0.0, GE)    # d_hi <= 0
_RIGHT = (1.0, 0.0, GE)    # d_hi >= 0
_UP = (0.0, 1.0, GE)       # d_lo >= 0
_DOWN = (0.0, -1.0, GE)    # d_lo <= 0
_LINE_LO = (0.0, 1.0, EQ)  # d_lo == 0

# (state of A[i,n], state of A[i,n-1]) -> constraints; states: "0", "mid", "1"
_TABLE1 = {
    ("0", "0"): (),
    ("0", "mid"): (_UP,),
    ("0", "1"): (_LEFT, _UP),
    ("mid", "0"): (_LEFT,),
    ("mid", "1"): (_LEFT,),
    ("1", "0"): (_LEFT, _UP),
    ("1", "mid"): (_UP,),
}

# (A[n-1,n] > 0, column) -> constraints, for alpha_{n-1} >= alpha_n
_TABLE3 = {
    (False, "lt"): (_DOWN,),
    (False, "eq"): (_LINE_LO,),
    (False, "between"): (_UP,),
    (False, "top"): (_RIGHT, _UP),
    (True, "lt"): (),
    (True, "eq"): (),
    (True, "between"): (),
    (True, "top"): (_RIGHT,),
}


def _normals(constraints):
    out = []
    for a, b, op in constraints:
        if a == 0 and b == 0:
            continue
        v = np.array([a, b], float) / math.hypot(a, b)
        out.append(v)
        if op == EQ:
            out.append(-v)
    return out


def classify(constraints, tol=1e-12) -> str:
    """Shape of the cone ``{d : n_k . d >= 0}``: full, half-plane, line, quadrant, ray or point."""
    N = _normals(constraints)
    if not N:
        return "full"
    ref = N[0]
    parallel = all(abs(ref[0] * v[1] - ref[1] * v[0]) <= tol for v in N)
    if parallel:
        same = all(ref @ v > 0 for v in N)
        return "half-plane" if same else "line"
    cands = []
    for v in N:
        for d in (np.array([-v[1], v[0]]), np.array([v[1], -v[0]])):
            if all(w @ d >= -tol for w in N):
                if not any(np.linalg.norm(d - c) <= 1e-9 for c in cands):
                    cands.append(d)
    if not cands:
        return "point"
    return "ray" if len(cands) == 1 else "quadrant"


def _level(x):
    if abs(x) <= ZERO_TOL:
        return "0"
    if abs(x - 1) <= ZERO_TOL:
        return "1"
    return "mid"


def effective_region(A, check_minimal: bool = True) -> DiagramSet:
    """Collect local constraint diagrams triggered by structural zeros/ones and intersect them."""
    A0 = np.asarray(A, dtype=float)
    if check_minimal:
        _require_minimal(A0)
    A, swapped = canonical_orientation(A0)
    n = A.shape[0]
    alpha = relative_entry(A)
    into = entry_mass(A)
    diagrams, warns = [], []

    def fragile(x, what):
        for ref in (0.0, 1.0):
            if ZERO_TOL < abs(x - ref) < FRAGILE_TOL:
                warns.append(f"identifiability is numerically fragile: {what} = {x:.3e} is near {ref:g}")

    for i in range(n - 2):
        c, a = A[i, n - 1], A[i, n - 2]
        fragile(c, f"A[{i},{n - 1}]")
        fragile(a, f"A[{i},{n - 2}]")
        key = (_level(c), _level(a))
        if key == ("mid", "mid"):
            continue
        if key == ("1", "1"):
            warns.append(f"state {i} receives all mass from both aliased states")
            continue
        diagrams.append(Diagram("table1", f"A[{i},{n - 1}]={key[0]}, A[{i},{n - 2}]={key[1]}", _TABLE1[key]))

    for j in range(n - 2):
        if into[j] <= SUPPORT_TOL:
            continue
        fragile(alpha[j], f"alpha[{j}]")
        lv = _level(alpha[j])
        if lv == "0":
            diagrams.append(Diagram("table2", f"alpha[{j}]=0", (_DOWN,)))
        elif lv == "1":
            diagrams.append(Diagram("table2", f"alpha[{j}]=1", (_RIGHT,)))

    P1, P2 = into[-2], into[-1]
    x, y = A[n - 2, n - 2], A[n - 1, n - 1]
    off_hi, off_lo = A[n - 2, n - 1], A[n - 1, n - 2]
    if P1 > ZERO_TOL:
        if alpha[-2] >= alpha[-1]:
            dn = P1 - P2
            if abs(dn) <= ZERO_TOL and _level(alpha[-2]) == "1" and off_hi <= ZERO_TOL:
                # block is diag(P, P): every t keeps it non-negative
                warns.append("aliased block is a scaled identity; no block constraint")
            else:
                if abs(x - P1) <= ZERO_TOL:
                    col = "top"
                elif abs(x - y) <= ZERO_TOL:
                    col = "eq"
                elif x < y:
                    col = "lt"
                else:
                    col = "between"
                if ZERO_TOL < abs(x - y) < FRAGILE_TOL:
                    warns.append(f"near-tie A[n-1,n-1] vs A[n,n]: {x:.3e} vs {y:.3e}")
                fragile(off_hi, f"A[{n - 2},{n - 1}]")
                key = (off_hi > ZERO_TOL, col)
                cons = _TABLE3[key]
                if cons:
                    diagrams.append(Diagram("table3", f"A[n-1,n]>0={key[0]}, column={col}", cons))
        else:
            cons = []
            if x <= ZERO_TOL:
                # tangent of A_H[n-1,n-1] >= 0 at (1, 0)
                cons.append((-off_hi, -P1, GE))
            if y <= ZERO_TOL:
                cons.append((P2, off_lo, GE))
            fragile(x, f"A[{n - 2},{n - 2}]")
            fragile(y, f"A[{n - 1},{n - 1}]")
            if cons:
                diagrams.append(Diagram("table4", f"A[n-1,n-1]={_level(x)}, A[n,n]={_level(y)}", tuple(cons)))

    allc = [c for d in diagrams for c in d.constraints]
    return DiagramSet(diagrams, classify(allc), swapped, warns)


def analyze(h: Hmm) -> dict:
    """Full structural report for a 2-aliased model (JSON-ready)."""
    if not h.aliased:
        raise NotAliasedError("structure analysis needs a 2-aliased model")
    st = stationary(h)
    dec = decompose(h.A, st.beta)
    mv = is_minimal(h)
    rep = {
        "n": h.n,
        "state_permutation": list(h.permutation),
        "stationary": st.pi.tolist(),
        "beta": st.beta,
        "decomposition": dec.to_dict(),
        "minimality": mv.to_dict(),
        "minimal": mv.minimal,
    }
    if not mv.minimal:
        rep.update(identifiable=False, region=None, diagrams=None)
        return rep
    reg = feasible_region(h.A, check_minimal=False)
    ds = effective_region(h.A, check_minimal=False)
    rep["region"] = reg.to_dict()
    rep["diagrams"] = ds.to_dict()
    rep["identifiable"] = ds.identifiable
    rep["region_agrees"] = reg.singleton == ds.identifiable
    return rep
