"""Command-line interface: ``tvcs <command> [options]``.

Every command writes its outputs and a ``config.json`` echo into ``--out``
(default ``tvcs-out``); run metadata that would break byte-for-byte
reproducibility (time, versions) goes into ``provenance.json``.  Exit codes:
0 success, 1 usage error, 2 numerical failure.
"""
import argparse
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from ._backend import BACKEND
from .errors import InvalidParameters, NumericalFailure
from .experiments import (PhaseConfig, StabilityConfig, WIDTH_COLUMNS_FULL, check_flags,
                          draw_signal, fit_noise_constant, phase_svg, phase_transition,
                          rows_to_csv, signal_rng, stability_csv, stability_suite, width_rows)
from .haar import DENSE_LIMIT, NonDyadicHaar
from .signals import FAMILIES, PiecewiseConstantFn, Signal, generate
from .solver import MeasurementModel, SolveOptions, solve_tv
from .tree import build_tree, extended_support
from .width import METHODS

EXPERIMENTS = ("width", "phase", "stability")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


def parse_ints(text):
    """``"64..1024"`` (doubling), ``"3,5,9"`` or ``"7"``."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, int):
        return [text]
    text = str(text).strip()
    if ".." in text:
        a, b = (int(v) for v in text.split(".."))
        if a < 1 or b < a:
            raise InvalidParameters(f"bad range {text!r}")
        out = []
        while a <= b:
            out.append(a)
            a *= 2
        return out
    return [int(v) for v in text.split(",") if v.strip()]


def parse_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _common(p):
    p.add_argument("--out", help="output directory (default: tvcs-out)")
    p.add_argument("--config", help="JSON file with option values; flags override it")


def build_parser():
    ap = _Parser(prog="tvcs", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a signal or step function")
    _common(p)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--levels", help="comma-separated piece levels")
    p.add_argument("--seed", type=int)

    for name, helptext in (("tree", "build the tree for a jump set"),
                           ("haar", "Haar matrix and sparse rows of H grad^T")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--support", help="comma-separated 1-based jump faces")
        p.add_argument("--n", type=int)
        p.add_argument("--delta", type=float,
                       help="separation for the extended support; omit to use the faces as given")

    p = sub.add_parser("width", help="conic mean width estimates")
    _common(p)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--signal", help="signal CSV instead of a family")
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--method", help="'all' or comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--trials", type=int)
    p.add_argument("--tau-search", dest="tau_search", action="store_const", const=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("solve", help="TV minimisation for given A and y")
    _common(p)
    p.add_argument("--A", dest="A", help="CSV matrix")
    p.add_argument("--y", help="CSV vector")
    p.add_argument("--eta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--method", choices=("pdhg", "dr"))

    p = sub.add_parser("phase", help="phase-transition experiment")
    _common(p)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--s", type=int)
    p.add_argument("--n", help="n grid, e.g. 64..1024 or 64,256")
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--saturation", type=int,
                   help="stop a column after this many consecutive all-success cells")
    p.add_argument("--method", choices=("pdhg", "dr"))
    p.add_argument("--seed", type=int)

    p = sub.add_parser("stability", help="stable and robust recovery experiment")
    _common(p)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--eps", help="comma-separated perturbation amplitudes")
    p.add_argument("--eta", help="comma-separated noise levels")
    p.add_argument("--instances", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--m-factor", dest="m_factor", type=float)
    p.add_argument("--R", dest="R", type=float)
    p.add_argument("--width-trials", dest="width_trials", type=int)
    p.add_argument("--seed", type=int)
    return ap


DEFAULTS = {
    "gen": {"family": "equidistant", "n": 64, "s": 5, "levels": None, "seed": None},
    "tree": {"support": None, "n": None, "delta": None},
    "haar": {"support": None, "n": None, "delta": None},
    "width": {"family": "equidistant", "signal": None, "n": 256, "s": 5, "method": "all",
              "trials": 200, "tau_search": False, "seed": None},
    "solve": {"A": None, "y": None, "eta": 0.0, "tol": 1e-8, "max_iters": 200_000,
              "method": "pdhg"},
    "phase": {"family": "equidistant", "s": 5, "n": "64..1024", "m_max": None, "trials": 50,
              "tol": 1e-4, "saturation": None, "method": "dr", "seed": None},
    "stability": {"family": "equidistant", "n": 128, "s": 3, "eps": "0", "eta": "0",
                  "instances": 20, "m": None, "m_factor": 1.0, "R": None,
                  "width_trials": 100, "seed": None},
}


def resolve_config(args):
    """Defaults, then the JSON config file, then explicit flags."""
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(cfg) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.command in EXPERIMENTS and cfg.get("seed") is None:
        raise UsageError(f"--seed is required for '{args.command}'")
    return cfg


def _write(out, name, text):
    with open(os.path.join(out, name), "w", newline="") as fh:
        fh.write(text)


def _echo(out, command, cfg, argv):
    _write(out, "config.json", json.dumps({"command": command, **cfg}, indent=2, sort_keys=True) + "\n")
    meta = {
        "argv": list(argv),
        "version": __version__,
        "kernels": BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "time": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    _write(out, "provenance.json", json.dumps(meta, indent=2) + "\n")


def _read_matrix(path):
    A = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    return A


def _cmd_gen(cfg, out):
    rng = np.random.default_rng(cfg["seed"]) if cfg["seed"] is not None else None
    levels = parse_floats(cfg["levels"]) if cfg["levels"] else None
    obj = generate(cfg["family"], s=cfg["s"], n=cfg["n"], levels=levels, rng=rng)
    if isinstance(obj, PiecewiseConstantFn):
        _write(out, "function.json", obj.to_json() + "\n")
        print(json.dumps({"file": "function.json", "s": obj.s}))
    else:
        _write(out, "signal.csv", obj.to_csv())
        print(json.dumps({"file": "signal.csv", "n": obj.n, "s": obj.s,
                          "support": [int(v) for v in obj.support]}))
    return 0


def _tree_from_cfg(cfg):
    if cfg["support"] is None or cfg["n"] is None:
        raise UsageError("--support and --n are required")
    faces = parse_ints(cfg["support"])
    n = int(cfg["n"])
    sbar = extended_support(faces, cfg["delta"], n) if cfg["delta"] is not None else faces
    return build_tree(sbar, n)


def _cmd_tree(cfg, out):
    t = _tree_from_cfg(cfg)
    _write(out, "tree.json", json.dumps(t.to_dict(), indent=1) + "\n")
    _write(out, "tree.dot", t.to_dot())
    print(json.dumps({"support_bar": [int(v) for v in t.support_bar], "depth": t.depth,
                      "top_depth": t.top_depth}))
    return 0


def _cmd_haar(cfg, out):
    t = _tree_from_cfg(cfg)
    H = NonDyadicHaar(t)
    if t.n <= DENSE_LIMIT:
        np.savetxt(os.path.join(out, "haar.csv"), H.todense(), delimiter=",", fmt="%.17g")
    rows, cols, vals = H.grad_rows()
    lines = ["row,col,value"] + [f"{r},{c},{v!r}" for r, c, v in zip(rows, cols, vals.tolist())]
    _write(out, "haar_grad_coo.csv", "\n".join(lines) + "\n")
    _write(out, "pivots.csv", "row,pivot\n" + "".join(
        f"{i},{p}\n" for i, p in enumerate(H.pivot_order)))
    print(json.dumps({"n": t.n, "dense": t.n <= DENSE_LIMIT, "nnz": int(vals.size)}))
    return 0


def _cmd_width(cfg, out):
    if cfg["signal"]:
        with open(cfg["signal"]) as fh:
            x = Signal.from_csv(fh.read())
        family = "file"
    else:
        x = draw_signal(cfg["family"], cfg["n"], cfg["s"], signal_rng(cfg["seed"], cfg["n"]))
        family = cfg["family"]
    methods = METHODS if cfg["method"] == "all" else tuple(cfg["method"].split(","))
    rows, skipped = width_rows(x, family, methods, cfg["trials"], cfg["seed"], cfg["tau_search"])
    for r in rows:
        r["s"] = x.s
    cols = ("family", "n", "s") + WIDTH_COLUMNS_FULL[2:]
    text = rows_to_csv(rows, cols)
    _write(out, "width.csv", text)
    sys.stdout.write(text)
    for meth, why in skipped:
        print(f"skipped {meth}: {why}", file=sys.stderr)
    return 0


def _cmd_solve(cfg, out):
    if cfg["A"] is None or cfg["y"] is None:
        raise UsageError("--A and --y are required")
    A = _read_matrix(cfg["A"])
    y = np.loadtxt(cfg["y"], delimiter=",", ndmin=1, comments="#").ravel()
    opts = SolveOptions(method=cfg["method"], tol=cfg["tol"], max_iters=cfg["max_iters"])
    res = solve_tv(MeasurementModel(A, y, cfg["eta"]), opts)
    _write(out, "x_hat.csv", Signal(res.x).to_csv() if np.all(np.isfinite(res.x)) else "")
    summary = {"status": res.status, "objective": res.objective,
               "feasibility_residual": res.feasibility_residual,
               "primal_dual_gap": res.primal_dual_gap, "iterations": res.iterations,
               "method": res.method}
    print(json.dumps(summary))
    return 0 if res.status == "converged" else 2


def _cmd_phase(cfg, out):
    pc = PhaseConfig(family=cfg["family"], seed=cfg["seed"], s=cfg["s"],
                     n_grid=tuple(parse_ints(cfg["n"])), m_max=cfg["m_max"],
                     trials=cfg["trials"], tol=cfg["tol"], method=cfg["method"],
                     saturation=cfg["saturation"])
    diag = phase_transition(pc)
    _write(out, "phase.csv", diag.to_csv())
    _write(out, "m50.csv", diag.m50_csv())
    _write(out, "phase.svg", phase_svg(diag))
    sys.stdout.write(diag.m50_csv())
    check_flags(diag)
    return 0


def _cmd_stability(cfg, out):
    sc = StabilityConfig(seed=cfg["seed"], family=cfg["family"], n=cfg["n"], s=cfg["s"],
                         eps=tuple(parse_floats(cfg["eps"])), eta=tuple(parse_floats(cfg["eta"])),
                         instances=cfg["instances"], m=cfg["m"], m_factor=cfg["m_factor"],
                         R=cfg["R"], width_trials=cfg["width_trials"])
    records, skipped, m = stability_suite(sc)
    _write(out, "stability.csv", stability_csv(records))
    c_fit = fit_noise_constant(records)
    summary = {"m": m, "records": len(records), "skipped": len(skipped),
               "c_fit": None if math.isnan(c_fit) else c_fit,
               "max_surrogate_gap": max((r.surrogate_gap for r in records), default=None)}
    _write(out, "stability_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    bad = [r for r in records if r.status != "converged"]
    if bad:
        raise NumericalFailure(f"{len(bad)} solves did not converge")
    return 0


COMMANDS = {"gen": _cmd_gen, "tree": _cmd_tree, "haar": _cmd_haar, "width": _cmd_width,
            "solve": _cmd_solve, "phase": _cmd_phase, "stability": _cmd_stability}


def run(argv=None):
    """Run the CLI and return the exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        cfg = resolve_config(args)
        out = args.out or os.environ.get("TVCS_OUT", "tvcs-out")
        os.makedirs(out, exist_ok=True)
        _echo(out, args.command, cfg, argv)
        return COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (InvalidParameters, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
