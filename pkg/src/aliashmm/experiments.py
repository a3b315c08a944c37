"""Seeded Monte-Carlo sweeps over sequence length and learning pipelines."""
from __future__ import annotations

import csv
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baselines import BwConfig, baum_welch
from .errors import AliasHmmError, ValidationError
from .hmm import Hmm, simulate, stationary
from .io import load_model
from .learner import DEFAULT_C_H, DEFAULT_EXPONENT, detect, learn
from .moments import empirical_moments, kernel

PIPELINES = ("mom", "bw-random", "bw-mom", "bw-exact")
COLUMNS = ("pipeline", "T", "replicate", "seed", "detected", "identified_ok",
           "mse_frobenius_sq", "runtime_ms", "sigma_hat")


@dataclass
class SweepConfig:
    model: Hmm
    T_values: list
    replicates: int
    seed: int = 0
    pipelines: tuple = ("mom",)
    c_h: float = DEFAULT_C_H
    exponent: float = DEFAULT_EXPONENT
    bw_iterations: int = 20
    output: Optional[str] = None
    timing: bool = True

    def __post_init__(self):
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        T = [int(t) for t in self.T_values]
        if not T or any(b <= a for a, b in zip(T, T[1:])):
            raise ValidationError("T values must be strictly increasing")
        if T[0] < 4:
            raise ValidationError("every T must be at least 4")
        self.T_values = T
        bad = [p for p in self.pipelines if p not in PIPELINES]
        if bad:
            raise ValidationError(f"unknown pipelines {bad}; choose from {list(PIPELINES)}")
        self.pipelines = tuple(self.pipelines)


def load_sweep_config(path) -> SweepConfig:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return SweepConfig(
            model=load_model(d["model"]),
            T_values=d["T"],
            replicates=int(d["replicates"]),
            seed=int(d.get("seed", 0)),
            pipelines=tuple(d.get("pipelines", ["mom"])),
            c_h=float(d.get("c_h", DEFAULT_C_H)),
            exponent=float(d.get("exponent", DEFAULT_EXPONENT)),
            bw_iterations=int(d.get("bw_iterations", 20)),
            output=d.get("output"),
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: missing key {exc}") from exc


def replicate_seeds(base_seed: int, r: int):
    """(simulation seed, baseline seed) for replicate r, independent of worker scheduling."""
    s = np.random.SeedSequence([int(base_seed), int(r)]).generate_state(2, dtype=np.uint32)
    return int(s[0]), int(s[1])


def state_means(h: Hmm):
    return [(e.mean, e.var) for e in h.emissions]


def permutation_mse(A_hat, A, labels_hat=None, labels=None) -> float:
    """Smallest ``||P A_hat P^T - A||_F^2`` over relabelings that keep emission labels aligned.

    Falls back to all relabelings when no label-preserving one exists (or no
    labels are given).
    """
    A_hat = np.asarray(A_hat, float)
    A = np.asarray(A, float)
    n = A.shape[0]
    if A_hat.shape != A.shape:
        raise ValidationError(f"shape mismatch {A_hat.shape} vs {A.shape}")
    perms = list(itertools.permutations(range(n)))
    if labels_hat is not None and labels is not None:
        keep = [p for p in perms if all(labels_hat[p[k]] == labels[k] for k in range(n))]
        perms = keep or perms
    best = np.inf
    for p in perms:
        p = list(p)
        best = min(best, float(np.sum((A_hat[np.ix_(p, p)] - A) ** 2)))
    return best


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_replicate(cfg: SweepConfig, T: int, r: int) -> list:
    """All pipelines on one simulated sequence; returns rows in pipeline order."""
    h = cfg.model
    sim_seed, bw_seed = replicate_seeds(cfg.seed, r)
    _, y = simulate(h, T, sim_seed)
    st = stationary(h)
    uniq = h.unique_emissions
    truth_labels = state_means(h)
    branch = "aliased" if h.aliased else "non-aliased"
    rows = []
    mom = None
    mom_ms = 0.0

    def get_mom():
        nonlocal mom, mom_ms
        if mom is None:
            t0 = time.perf_counter()
            mom = learn(y, uniq, st.pi_merged, c_h=cfg.c_h, exponent=cfg.exponent, branch=branch)
            mom_ms = 1e3 * (time.perf_counter() - t0)
        return mom

    for pipe in cfg.pipelines:
        row = dict(pipeline=pipe, T=T, replicate=r, seed=sim_seed, detected=None,
                   identified_ok=None, mse_frobenius_sq=None, runtime_ms=None, sigma_hat=None)
        t0 = time.perf_counter()
        try:
            if pipe == "mom":
                rep = get_mom()
                labels = [(uniq[k].mean, uniq[k].var) for k in rep.state_components]
                row["mse_frobenius_sq"] = permutation_mse(rep.A_hat, h.A, labels, truth_labels)
                row["detected"] = rep.detection.aliased
                row["sigma_hat"] = rep.detection.sigma_hat
                if h.aliased:
                    row["identified_ok"] = rep.aliased_component == len(uniq) - 1
                elapsed = mom_ms
            elif pipe == "bw-random":
                res = baum_welch(y, h.n, BwConfig(cfg.bw_iterations, "random", bw_seed))
                row["mse_frobenius_sq"] = permutation_mse(res.A, h.A)
                elapsed = 1e3 * (time.perf_counter() - t0)
            elif pipe == "bw-exact":
                res = baum_welch(y, h.n, BwConfig(cfg.bw_iterations, "exact-emissions", bw_seed,
                                                  emissions=h.emissions))
                row["mse_frobenius_sq"] = permutation_mse(res.A, h.A, truth_labels, truth_labels)
                elapsed = 1e3 * (time.perf_counter() - t0)
            else:  # bw-mom
                rep = get_mom()
                t1 = time.perf_counter()
                ems = [uniq[k] for k in rep.state_components]
                pair = (h.n - 2, h.n - 1) if rep.branch == "aliased" else None
                init = Hmm(rep.A_hat, ems, aliased_pair=pair)
                res = baum_welch(y, h.n, BwConfig(cfg.bw_iterations, "from-model", model=init,
                                                  freeze_emissions=True))
                labels = [(e.mean, e.var) for e in ems]
                row["mse_frobenius_sq"] = permutation_mse(res.A, h.A, labels, truth_labels)
                elapsed = mom_ms + 1e3 * (time.perf_counter() - t1)
        except AliasHmmError:
            elapsed = 1e3 * (time.perf_counter() - t0)
        if cfg.timing:
            row["runtime_ms"] = round(elapsed, 3)
        rows.append(row)
    return rows


def _task(args):
    cfg, T, r = args
    return run_replicate(cfg, T, r)


def worker_count() -> int:
    env = os.environ.get("AHMM_THREADS")
    if env:
        try:
            k = int(env)
        except ValueError as exc:
            raise ValidationError(f"AHMM_THREADS must be an integer, got {env!r}") from exc
        if k < 1:
            raise ValidationError("AHMM_THREADS must be at least 1")
        return k
    return os.cpu_count() or 1


def sweep(cfg: SweepConfig, workers: Optional[int] = None) -> list:
    """Rows ordered by (T, replicate, pipeline) regardless of completion order."""
    tasks = [(cfg, T, r) for T in cfg.T_values for r in range(cfg.replicates)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) == 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_task, tasks))
    return [row for rows in results for row in rows]


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in COLUMNS])


def null_sigmas(model: Hmm, T: int, replicates: int, seed: int = 0):
    """Top singular value of the empirical dM2 on sequences from a non-aliased model."""
    kern = kernel(model.unique_emissions)
    pi = stationary(model).pi_merged
    out = np.empty(replicates)
    for r in range(replicates):
        s, _ = replicate_seeds(seed, r)
        _, y = simulate(model, T, s)
        ms = empirical_moments(y, pi_merged=pi, kern=kern)
        out[r] = detect(ms).sigma_hat
    return out


def calibrate_threshold(model: Hmm, T_values, replicates: int, seed: int = 0,
                        quantile: float = 0.99, exponent: float = DEFAULT_EXPONENT) -> dict:
    """Pick the detection constant from the null distribution of the test statistic.

    An aliased model is replaced by its merged chain so the sequences are
    drawn under the null.
    """
    from .synth import merged_model

    if not 0 < quantile < 1:
        raise ValidationError("quantile must lie in (0, 1)")
    null = merged_model(model) if model.aliased else model
    per_T = []
    for T in T_values:
        sig = null_sigmas(null, int(T), replicates, seed)
        q = float(np.quantile(sig, quantile))
        per_T.append({"T": int(T), "quantile_sigma": q, "implied_c_h": q * float(T) ** exponent,
                      "mean_sigma": float(sig.mean())})
    return {
        "quantile": quantile,
        "exponent": exponent,
        "replicates": replicates,
        "per_T": per_T,
        "recommended_c_h": max(p["implied_c_h"] for p in per_T),
    }
