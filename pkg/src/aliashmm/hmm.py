"""Parametric-output HMM with scalar Gaussian emissions.

Transition convention throughout the package is column-stochastic:
``A[i, j] = P(next = i | current = j)``.  When the model has two states with
identical emission parameters, the pair is moved to the last two indices on
construction and the permutation is kept in ``Hmm.permutation``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from ._kernels import sample_chain
from .errors import ErgodicityError, ValidationError

STOCHASTIC_TOL = 1e-12
# Separation |mu_i - mu_j| / sqrt(var_i + var_j) below which a warning is raised.
MIN_SEPARATION = 0.05

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class EmissionParam:
    """Univariate Gaussian emission N(mean, var)."""

    mean: float
    var: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        if not (self.var > 0 and math.isfinite(self.var)):
            raise ValidationError(f"emission variance must be positive, got {self.var}")
        if self.family != "gaussian":
            raise ValidationError(f"unsupported emission family {self.family!r}")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "var", float(self.var))

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(-0.5 * (y - self.mean) ** 2 / self.var) / math.sqrt(2.0 * math.pi * self.var)

    def sample(self, rng: np.random.Generator, size=None):
        return self.mean + math.sqrt(self.var) * rng.standard_normal(size)

    def inner(self, other: "EmissionParam") -> float:
        """L2 inner product of the two densities."""
        s = self.var + other.var
        return math.exp(-((self.mean - other.mean) ** 2) / (2.0 * s)) / math.sqrt(2.0 * math.pi * s)

    @property
    def bound(self) -> float:
        """Supremum of the density."""
        return 1.0 / math.sqrt(2.0 * math.pi * self.var)

    def same_as(self, other: "EmissionParam", tol: float = 1e-12) -> bool:
        return abs(self.mean - other.mean) <= tol and abs(self.var - other.var) <= tol

    def to_dict(self):
        return {"mean": self.mean, "var": self.var}


def density(e: EmissionParam, y):
    """Density of emission ``e`` at ``y`` (scalar or array)."""
    out = e.pdf(y)
    return float(out) if np.ndim(out) == 0 else out


def density_matrix(emissions: Sequence[EmissionParam], y) -> np.ndarray:
    """``F[t, i] = f_i(y_t)`` as a (T, k) array."""
    y = np.asarray(y, dtype=float)
    means = np.array([e.mean for e in emissions])
    var = np.array([e.var for e in emissions])
    z = (y[:, None] - means[None, :]) ** 2 / var[None, :]
    return np.exp(-0.5 * z) / np.sqrt(2.0 * np.pi * var)[None, :]


def _find_aliased_pair(emissions):
    pairs = [
        (i, j)
        for i in range(len(emissions))
        for j in range(i + 1, len(emissions))
        if emissions[i].same_as(emissions[j])
    ]
    return pairs


@dataclass(frozen=True, eq=False)
class Hmm:
    """Column-stochastic HMM ``(A, emissions, initial)``.

    Parameters
    ----------
    transition : (n, n) array_like
        ``transition[i][j] = P(i | j)``.
    emissions : sequence of EmissionParam
    initial : (n,) array_like, optional
        Initial distribution; ``None`` means the stationary distribution.
    aliased_pair : pair of int, optional
        0-based indices of the two states sharing an emission.  If omitted the
        pair is detected from equal emission parameters.
    """

    transition: np.ndarray
    emissions: tuple
    initial: Optional[np.ndarray] = None
    aliased_pair: Optional[tuple] = None
    permutation: tuple = field(default=())

    def __post_init__(self):
        A = np.array(self.transition, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"transition matrix must be square, got shape {A.shape}")
        n = A.shape[0]
        ems = tuple(e if isinstance(e, EmissionParam) else EmissionParam(**e) for e in self.emissions)
        if len(ems) != n:
            raise ValidationError(f"{len(ems)} emissions for {n} states")
        init = None if self.initial is None else np.array(self.initial, dtype=float)
        if init is not None and init.shape != (n,):
            raise ValidationError(f"initial distribution must have length {n}")

        pair = self.aliased_pair
        if pair is None:
            found = _find_aliased_pair(ems)
            pair = found[0] if len(found) == 1 else None
        else:
            pair = tuple(sorted(int(p) for p in pair))
            if len(pair) != 2 or pair[0] == pair[1] or not 0 <= pair[0] < n or not 0 <= pair[1] < n:
                raise ValidationError(f"invalid aliased pair {self.aliased_pair}")
            if not ems[pair[0]].same_as(ems[pair[1]]):
                raise ValidationError(f"designated aliased states {pair} have different emissions")

        perm = tuple(range(n)) if not self.permutation else tuple(self.permutation)
        if pair is not None and pair != (n - 2, n - 1):
            order = [i for i in range(n) if i not in pair] + list(pair)
            A = A[np.ix_(order, order)]
            ems = tuple(ems[i] for i in order)
            if init is not None:
                init = init[order]
            perm = tuple(perm[i] for i in order)
            pair = (n - 2, n - 1)

        A.setflags(write=False)
        if init is not None:
            init.setflags(write=False)
        object.__setattr__(self, "transition", A)
        object.__setattr__(self, "emissions", ems)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "aliased_pair", pair)
        object.__setattr__(self, "permutation", perm)

    @property
    def A(self) -> np.ndarray:
        return self.transition

    @property
    def n(self) -> int:
        return self.transition.shape[0]

    @property
    def aliased(self) -> bool:
        return self.aliased_pair is not None

    @property
    def unique_emissions(self) -> tuple:
        """The distinct emission parameters, aliased component last."""
        return self.emissions[:-1] if self.aliased else self.emissions

    def with_transition(self, A) -> "Hmm":
        return Hmm(A, self.emissions, self.initial, self.aliased_pair, self.permutation)

    def with_initial(self, initial) -> "Hmm":
        return Hmm(self.transition, self.emissions, initial, self.aliased_pair, self.permutation)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def kinds(self) -> set:
        return {v.split(":", 1)[0] for v in self.violations}


def transition_graph(A, tol: float = 0.0) -> nx.DiGraph:
    """Directed graph with an edge j -> i for every ``A[i, j] > tol``."""
    A = np.asarray(A)
    g = nx.DiGraph()
    g.add_nodes_from(range(A.shape[0]))
    g.add_edges_from((int(j), int(i)) for i, j in zip(*np.nonzero(A > tol)))
    return g


def chain_period(A) -> int:
    """Period of an irreducible chain (gcd of cycle lengths)."""
    g = transition_graph(A)
    level = {0: 0}
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.successors(u):
                if v not in level:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    diffs = [level[u] + 1 - level[v] for u, v in g.edges() if u in level and v in level]
    return reduce(math.gcd, diffs, 0)


def validate(h: Hmm) -> ValidationReport:
    """List every violated structural constraint of ``h``; never raises."""
    rep = ValidationReport()
    A = h.A
    if not np.all(np.isfinite(A)):
        rep.violations.append("non-finite: transition matrix has non-finite entries")
        return rep
    col_err = np.abs(A.sum(axis=0) - 1.0)
    for j in np.nonzero(col_err > STOCHASTIC_TOL)[0]:
        rep.violations.append(f"column-sum: column {j} sums to {A[:, j].sum():.15g}")
    neg = np.argwhere(A < 0)
    for i, j in neg:
        rep.violations.append(f"negative-entry: A[{i},{j}] = {A[i, j]:.3g}")
    if np.any(A > 1 + STOCHASTIC_TOL):
        rep.violations.append("entry-range: entries above 1")

    g = transition_graph(A)
    if not nx.is_strongly_connected(g):
        rep.violations.append("reducible: transition graph is not strongly connected")
    elif chain_period(A) != 1:
        rep.violations.append(f"periodic: chain has period {chain_period(A)}")

    if h.initial is not None:
        if np.any(h.initial < 0):
            rep.violations.append("initial: negative entries")
        if abs(h.initial.sum() - 1.0) > STOCHASTIC_TOL:
            rep.violations.append(f"initial: sums to {h.initial.sum():.15g}")

    pairs = _find_aliased_pair(h.emissions)
    if len(pairs) > 1:
        rep.violations.append(f"emission-coincidence: {len(pairs)} coinciding emission pairs {pairs}")

    uniq = h.unique_emissions
    for i in range(len(uniq)):
        for j in range(i + 1, len(uniq)):
            a, b = uniq[i], uniq[j]
            if a.same_as(b):
                continue
            sep = abs(a.mean - b.mean) / math.sqrt(a.var + b.var)
            if sep < MIN_SEPARATION:
                rep.warnings.append(f"close-emissions: components {i},{j} separation {sep:.3g}")
    return rep


@dataclass(frozen=True)
class StationaryInfo:
    pi: np.ndarray
    beta: Optional[float]
    pi_merged: np.ndarray


def stationary_vector(A) -> np.ndarray:
    """Solve ``A pi = pi``, ``sum(pi) = 1`` by replacing one balance equation."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    M = A - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return np.linalg.solve(M, rhs)


def stationary(h: Hmm) -> StationaryInfo:
    """Unique stationary distribution of ``h``, with ``beta`` and the merged vector."""
    g = transition_graph(h.A)
    if not nx.is_strongly_connected(g):
        raise ErgodicityError("transition matrix is reducible")
    if chain_period(h.A) != 1:
        raise ErgodicityError("transition matrix is periodic")
    pi = stationary_vector(h.A)
    if np.any(pi <= 0):
        raise ErgodicityError("stationary distribution is not strictly positive")
    if h.aliased:
        beta = float(pi[-2] / (pi[-2] + pi[-1]))
        pi_merged = np.append(pi[:-2], pi[-2] + pi[-1])
    else:
        beta = None
        pi_merged = pi.copy()
    return StationaryInfo(pi=pi, beta=beta, pi_merged=pi_merged)


def simulate(h: Hmm, T: int, seed=None):
    """Draw ``(states, outputs)`` of length ``T``; states are 0-based.

    The chain starts from ``h.initial`` or, when absent, from the stationary
    distribution.  Identical seeds give bit-identical output.
    """
    if T < 1:
        raise ValidationError("T must be at least 1")
    rep = validate(h)
    structural = {k for k in rep.kinds() if k not in ("reducible", "periodic")}
    if structural:
        raise ValidationError("; ".join(rep.violations))
    rng = np.random.default_rng(seed)
    p0 = h.initial if h.initial is not None else stationary(h).pi
    p0 = np.clip(p0, 0, None)
    cum0 = np.cumsum(p0)
    x0 = min(int(np.searchsorted(cum0, rng.random() * cum0[-1], side="right")), h.n - 1)
    u = rng.random(T - 1)
    cum = np.cumsum(np.clip(h.A, 0, None), axis=0)
    cum /= cum[-1:, :]
    states = sample_chain(cum, x0, u)
    means = np.array([e.mean for e in h.emissions])
    sd = np.sqrt([e.var for e in h.emissions])
    outputs = means[states] + sd[states] * rng.standard_normal(T)
    return states, outputs
