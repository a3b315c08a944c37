"""Model JSON and sequence CSV files."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .hmm import EmissionParam, Hmm


def model_to_dict(h: Hmm) -> dict:
    d = {
        "n": h.n,
        "transition": h.A.tolist(),
        "emissions": [e.to_dict() for e in h.emissions],
    }
    if h.aliased:
        d["aliased_pair"] = [h.aliased_pair[0] + 1, h.aliased_pair[1] + 1]
    if h.initial is not None:
        d["initial"] = h.initial.tolist()
    return d


def model_from_dict(d: dict) -> Hmm:
    try:
        A = np.asarray(d["transition"], dtype=float)
        ems = [EmissionParam(float(e["mean"]), float(e.get("var", 1.0))) for e in d["emissions"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model description: {exc}") from exc
    if "n" in d and int(d["n"]) != A.shape[0]:
        raise ValidationError(f"n = {d['n']} does not match a {A.shape} transition matrix")
    pair = d.get("aliased_pair")
    if pair is not None:
        pair = tuple(int(p) - 1 for p in pair)
    return Hmm(A, ems, d.get("initial"), pair)


def load_model(path) -> Hmm:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_dict(d)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_model(path, h: Hmm):
    write_json(path, model_to_dict(h))


def write_column(path, values, header: str, fmt=repr):
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for v in values:
            fh.write(fmt(v) + "\n")


def write_outputs(path, y):
    write_column(path, np.asarray(y, dtype=float).tolist(), "y")


def write_states(path, x):
    """States are written 1-based."""
    write_column(path, (np.asarray(x, dtype=int) + 1).tolist(), "x", fmt=str)


def read_outputs(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["y"]:
        raise ValidationError(f"{path}: expected a single column with header 'y'")
    try:
        return np.array([float(r[0]) for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def read_states(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x"]:
        raise ValidationError(f"{path}: expected a single column with header 'x'")
    return np.array([int(r[0]) - 1 for r in rows[1:] if r], dtype=int)


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loglik"])
        for i, ll in enumerate(trace):
            w.writerow([i, repr(float(ll))])
