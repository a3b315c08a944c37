"""Command-line entry point ``aliashmm``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .baselines import BwConfig, baum_welch
from .errors import AliasHmmError, ValidationError
from .experiments import PIPELINES, calibrate_threshold, load_sweep_config, sweep, write_rows
from .hmm import simulate, stationary, validate
from .io import load_model, model_to_dict, read_outputs, save_model, write_json, write_outputs, write_states, write_trace
from .learner import DEFAULT_C_H, DEFAULT_EXPONENT, detect, identify_component, learn
from .moments import empirical_moments, kernel
from .structure import analyze

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


def _emit(obj, out):
    if out:
        write_json(out, obj)
    else:
        sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _checked_model(path):
    h = load_model(path)
    rep = validate(h)
    if not rep.ok:
        raise ValidationError("; ".join(rep.violations))
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return h


def _threshold_args(p):
    p.add_argument("--c-h", type=float, default=DEFAULT_C_H, help="threshold constant (default 2)")
    p.add_argument("--exponent", type=float, default=DEFAULT_EXPONENT,
                   help="threshold decay exponent (default 1/3)")


def _sequence_args(p):
    p.add_argument("--model", required=True, help="model JSON supplying the emission parameters")
    p.add_argument("--y", required=True, help="output sequence CSV (header 'y')")
    p.add_argument("--estimate-weights", action="store_true",
                   help="fit the merged stationary weights by mixture EM instead of using the model's")
    p.add_argument("--dump-moments", metavar="PATH", help="write the moment set as JSON")
    p.add_argument("--out", help="write the JSON report here instead of stdout")


def _moments_for(args):
    h = _checked_model(args.model)
    y = read_outputs(args.y)
    kern = kernel(h.unique_emissions)
    if args.estimate_weights:
        from .baselines import mixture_weights_em

        pi = mixture_weights_em(y, kern.emissions)
    else:
        pi = stationary(h).pi_merged
    ms = empirical_moments(y, pi_merged=pi, kern=kern)
    if args.dump_moments:
        write_json(args.dump_moments, ms.to_dict())
    return h, y, kern, pi, ms


def cmd_simulate(args):
    h = _checked_model(args.model)
    x, y = simulate(h, args.T, args.seed)
    write_outputs(args.out, y)
    if args.states_out:
        write_states(args.states_out, x)


def cmd_analyze(args):
    h = _checked_model(args.model)
    _emit(analyze(h), args.out)


def cmd_detect(args):
    _, y, _, _, ms = _moments_for(args)
    det = detect(ms, T=y.size, c_h=args.c_h, exponent=args.exponent)
    _emit({"T": int(y.size), "detection": det.to_dict()}, args.out)


def cmd_identify(args):
    _, y, kern, _, ms = _moments_for(args)
    det = detect(ms, T=y.size, c_h=args.c_h, exponent=args.exponent)
    out = {"T": int(y.size), "detection": det.to_dict()}
    if det.aliased:
        comp, scores, tied = identify_component(ms, kern)
        out.update(aliased_component=comp + 1, component_scores=scores.tolist(), tie=tied)
    _emit(out, args.out)


def cmd_learn(args):
    h, y, kern, pi, ms = _moments_for(args)
    rep = learn(y, kern.emissions, pi, c_h=args.c_h, exponent=args.exponent, branch=args.branch)
    d = rep.to_dict()
    if rep.aliased_component is not None:
        d["aliased_component"] = rep.aliased_component + 1
    d["state_components"] = [k + 1 for k in rep.state_components]
    if args.no_timing:
        d.pop("timing_ms")
    _emit(d, args.out)
    if args.model_out:
        from .hmm import Hmm

        ems = [kern.emissions[k] for k in rep.state_components]
        pair = (len(ems) - 2, len(ems) - 1) if rep.branch == "aliased" else None
        save_model(args.model_out, Hmm(rep.A_hat, ems, aliased_pair=pair))


def cmd_bw(args):
    y = read_outputs(args.y)
    if args.init == "random":
        if args.n is None:
            raise ValidationError("--n is required for random init")
        n = args.n
        cfg = BwConfig(args.iterations, "random", args.seed)
    else:
        if not args.model:
            raise ValidationError(f"--model is required for {args.init} init")
        h = load_model(args.model)
        n = h.n
        if args.init == "from-model":
            cfg = BwConfig(args.iterations, "from-model", args.seed, model=h,
                           freeze_emissions=args.freeze_emissions)
        else:
            cfg = BwConfig(args.iterations, "exact-emissions", args.seed, emissions=h.emissions)
    res = baum_welch(y, n, cfg)
    out = {
        "transition": res.A.tolist(),
        "emissions": [{"mean": float(m), "var": float(v)} for m, v in zip(res.means, res.variances)],
        "n": n,
        "loglik": res.trace[-1],
        "variance_floor_active": res.floor_active,
    }
    if res.model is not None:
        out.update(model_to_dict(res.model))
    _emit(out, args.out)
    if args.trace_out:
        write_trace(args.trace_out, res.trace)


def cmd_sweep(args):
    cfg = load_sweep_config(args.config)
    if args.no_timing:
        cfg.timing = False
    out = args.out or cfg.output
    if not out:
        raise ValidationError("no output path: pass --out or set 'output' in the config")
    rows = sweep(cfg, workers=args.threads)
    write_rows(out, rows)


def cmd_calibrate(args):
    h = _checked_model(args.model)
    res = calibrate_threshold(h, args.T, args.replicates, args.seed, args.quantile, args.exponent)
    _emit(res, args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aliashmm", description="Aliased-state HMM analysis and learning")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw an output sequence")
    s.add_argument("--model", required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output CSV (header 'y')")
    s.add_argument("--states-out", help="hidden states CSV (header 'x', 1-based)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", help="minimality and identifiability report")
    s.add_argument("--model", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_analyze)

    for name, func, text in (("detect", cmd_detect, "rank test for an aliased pair"),
                             ("identify", cmd_identify, "detect and pick the aliased component")):
        s = sub.add_parser(name, help=text)
        _sequence_args(s)
        _threshold_args(s)
        s.set_defaults(func=func)

    s = sub.add_parser("learn", help="estimate the transition matrix by moments")
    _sequence_args(s)
    _threshold_args(s)
    s.add_argument("--branch", choices=("auto", "aliased", "non-aliased"), default="auto")
    s.add_argument("--model-out", help="write the estimated model JSON")
    s.add_argument("--no-timing", action="store_true", help="omit wall-clock timings")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("bw", help="Baum-Welch baseline")
    s.add_argument("--y", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--model", help="initial model or source of exact emissions")
    s.add_argument("--init", choices=("random", "from-model", "exact-emissions"), default="random")
    s.add_argument("--freeze-emissions", action="store_true")
    s.add_argument("--iterations", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--trace-out", help="CSV of (iteration, loglik)")
    s.set_defaults(func=cmd_bw)

    s = sub.add_parser("sweep", help="Monte-Carlo sweep to a long-format CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--threads", type=int, help="worker processes (default: AHMM_THREADS or CPU count)")
    s.add_argument("--no-timing", action="store_true", help="leave runtime_ms empty for byte-identical reruns")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("calibrate-threshold", help="detection constant from the null distribution")
    s.add_argument("--model", required=True)
    s.add_argument("--T", type=int, nargs="+", required=True)
    s.add_argument("--replicates", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--quantile", type=float, default=0.99)
    s.add_argument("--exponent", type=float, default=DEFAULT_EXPONENT)
    s.add_argument("--out")
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_VALIDATION
    try:
        args.func(args)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (AliasHmmError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
