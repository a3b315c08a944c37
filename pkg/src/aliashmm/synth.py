"""Reference models and random model generators."""
from __future__ import annotations

import networkx as nx
import numpy as np

from .decomp import decompose
from .hmm import EmissionParam, Hmm, chain_period, stationary, transition_graph

FOUR_STATE_TRANSITION = np.array([
    [0.3, 0.25, 0.0, 0.8],
    [0.6, 0.25, 0.2, 0.0],
    [0.0, 0.5, 0.1, 0.1],
    [0.1, 0.0, 0.7, 0.1],
])


def four_state_model(aliased_mean: float = 0.0) -> Hmm:
    """Four states, emissions N(3,1), N(6,1) and a shared N(mu,1) for states 3 and 4."""
    ems = [EmissionParam(3.0), EmissionParam(6.0), EmissionParam(aliased_mean), EmissionParam(aliased_mean)]
    return Hmm(FOUR_STATE_TRANSITION, ems)


def merged_model(h: Hmm) -> Hmm:
    """Non-aliased chain on the distinct components obtained by collapsing the aliased pair."""
    st = stationary(h)
    return Hmm(decompose(h.A, st.beta).A_merged, h.unique_emissions)


def is_ergodic(A) -> bool:
    return nx.is_strongly_connected(transition_graph(A)) and chain_period(A) == 1


def random_transition(n: int, rng: np.random.Generator, zero_frac: float = 0.0, max_tries: int = 1000):
    """Ergodic column-stochastic matrix with roughly ``zero_frac`` structural zeros."""
    for _ in range(max_tries):
        A = rng.dirichlet(np.ones(n), size=n).T
        if zero_frac > 0:
            A[rng.random((n, n)) < zero_frac] = 0.0
            s = A.sum(axis=0)
            if np.any(s == 0):
                continue
            A /= s
        if is_ergodic(A):
            return A
    raise RuntimeError("could not draw an ergodic matrix")


def random_aliased_model(n: int, rng: np.random.Generator, zero_frac: float = 0.0,
                         minimal: bool = True, spacing: float = 3.0, max_tries: int = 1000) -> Hmm:
    """Random 2-aliased model with well separated unit-variance emissions."""
    for _ in range(max_tries):
        A = random_transition(n, rng, zero_frac)
        means = spacing * rng.permutation(n - 1).astype(float)
        ems = [EmissionParam(m) for m in means] + [EmissionParam(means[-1])]
        h = Hmm(A, ems)
        if not minimal:
            return h
        d = decompose(h.A, stationary(h).beta)
        if np.max(np.abs(d.delta_out)) > 1e-3 and np.max(np.abs(d.delta_in)) > 1e-3:
            return h
    raise RuntimeError("could not draw a minimal model")
