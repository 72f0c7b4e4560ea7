"""Command-line entry point: ``python -m needlet_ustats <subcommand> ...``.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .frame import build_frame, frame_to_json
from .moments import bound_quadratic, compute_moments, u1_linear_bound
from .point_process import (
    read_field_csv,
    sample_classical,
    sample_poisson_field,
    write_field_csv,
    write_field_json,
)
from .ustatistics import jupp_statistic, u1_raw, u1_standardize, u2_raw, u2_standardize
from .sphere import uniform_density

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _density_args(p):
    p.add_argument("--density", choices=["uniform", "perturbed"], default="uniform")
    p.add_argument("--ell", type=int, default=1, help="perturbation degree")
    p.add_argument("--eps", type=float, default=0.0, help="perturbation size")


def _density(args):
    spec = {"kind": args.density}
    if args.density == "perturbed":
        spec.update(ell=args.ell, eps=args.eps)
    return harness.make_density(spec, args.q)


def _frame_args(p, multi=False):
    p.add_argument("--B", type=float, default=2.0)
    if multi:
        p.add_argument("--j", type=int, nargs="+", default=[2])
    else:
        p.add_argument("--j", type=int, default=2)
    p.add_argument("--q", type=int, default=2)


def _emit(doc, out):
    text = json.dumps(doc, indent=1)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _outdir(args):
    return Path(args.out) if getattr(args, "out", None) else harness.default_output_dir()


def cmd_frame(args):
    fr = build_frame(args.B, args.j, args.q)
    doc = frame_to_json(fr, include_nodes=args.nodes)
    doc["equatorial_center"] = harness.equatorial_center(fr)
    _emit(doc, args.out)


def cmd_sample(args):
    f = _density(args)
    seed = [int(s) for s in args.seed]
    if args.model == "poisson":
        fld = sample_poisson_field(f, args.R, seed)
    else:
        fld = sample_classical(f, args.n, seed)
    out = Path(args.out) if args.out else _outdir(args) / "field.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    (write_field_json if out.suffix == ".json" else write_field_csv)(fld, out)
    print(json.dumps({"path": str(out), **fld.metadata()}))


def cmd_ustat(args):
    fld = read_field_csv(args.field)
    q = fld.q
    R = args.R if args.R is not None else float(len(fld))
    if args.family == "Jupp":
        if not args.weights:
            raise harness.ConfigError("Jupp needs --weights")
        _emit({"family": "Jupp", "raw": jupp_statistic(fld, args.weights, q)}, None)
        return
    fr = build_frame(args.B, args.j, q)
    if args.family == "U1":
        k = harness.equatorial_center(fr) if args.k is None else args.k
        tab = compute_moments(fr, k, uniform_density(q), args.u)
        val = u1_standardize(u1_raw(fld, fr, k, args.u), fr, k, args.u, tab, R)
    else:
        tab = compute_moments(fr, 0, uniform_density(q), 2)
        val = u2_standardize(u2_raw(fld, fr, args.method), fr, tab, R, centering=args.centering)
    _emit(val.to_dict(), None)


def cmd_moments(args):
    fr = build_frame(args.B, args.j, args.q)
    k = harness.equatorial_center(fr) if args.k is None else args.k
    _emit(compute_moments(fr, k, _density(args), args.u).to_dict(), args.out)


def cmd_bound(args):
    if args.family == "U2":
        frames = [build_frame(args.B, j, args.q) for j in args.j]
        rep = bound_quadratic(frames, args.R)
    else:
        fr = build_frame(args.B, args.j[0], args.q)
        ks = args.k if args.k else [harness.equatorial_center(fr)]
        rep = u1_linear_bound(fr, ks, _density(args), args.u, args.R)
    _emit(rep.to_dict(), args.out)


def cmd_experiment(args):
    overrides = {"replications": args.M, "master_seed": args.seed, "workers": args.workers}
    if (args.config is None) == (args.preset is None):
        raise harness.ConfigError("give exactly one of --config or --preset")
    if args.preset:
        cfg = harness.load_preset(args.preset, overrides)
    else:
        cfg = harness.load_config(args.config, overrides)
    out = Path(args.out) if args.out else Path(cfg.output) if cfg.output else harness.default_output_dir()
    res = harness.run_experiment(cfg, out)
    print(json.dumps({"output": str(out), "cells": len(res.rows), "rates": res.rates}))


def cmd_replay(args):
    seed = args.seed_block if args.seed_block else None
    row = harness.replay_cell(args.result, args.cell, seed)
    print(json.dumps({"cell": args.cell, "status": "identical", "d_K": "%.17g" % row["d_K"]}))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="needlet-ustats", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("frame", help="build and export a needlet frame")
    _frame_args(s)
    s.add_argument("--nodes", action="store_true", help="include cubature nodes/weights")
    s.add_argument("--out")
    s.set_defaults(func=cmd_frame)

    s = sub.add_parser("sample", help="draw a point field to CSV/JSON")
    s.add_argument("--model", choices=["poisson", "classical"], default="poisson")
    s.add_argument("--R", type=float, default=1000.0)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--q", type=int, default=2)
    s.add_argument("--seed", type=int, nargs="+", default=[0])
    _density_args(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("ustat", help="evaluate one statistic on a field file")
    s.add_argument("--field", required=True)
    s.add_argument("--family", choices=["U1", "U2", "Jupp"], default="U2")
    s.add_argument("--B", type=float, default=2.0)
    s.add_argument("--j", type=int, default=2)
    s.add_argument("--k", type=int)
    s.add_argument("--u", type=int, default=2)
    s.add_argument("--R", type=float, help="intensity used for standardisation (default: point count)")
    s.add_argument("--weights", type=float, nargs="*")
    s.add_argument("--method", default="auto", choices=["auto", "kernel", "coefficient", "harmonic"])
    s.add_argument("--centering", default="exact", choices=["exact", "nominal"])
    s.set_defaults(func=cmd_ustat)

    s = sub.add_parser("moments", help="moment table for a frame and density")
    _frame_args(s)
    s.add_argument("--k", type=int)
    s.add_argument("--u", type=int, default=2)
    _density_args(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("bound", help="Stein-Malliavin bound report")
    s.add_argument("--family", choices=["U1", "U2"], default="U2")
    _frame_args(s, multi=True)
    s.add_argument("--R", type=float, default=1e4)
    s.add_argument("--k", type=int, nargs="*")
    s.add_argument("--u", type=int, default=2)
    _density_args(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("experiment", help="run a Monte Carlo grid from a JSON config")
    s.add_argument("--config")
    s.add_argument("--preset", help="one of the shipped presets, e.g. u2_rate")
    s.add_argument("--M", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("replay", help="recompute a stored cell and verify it bit for bit")
    s.add_argument("--result", required=True)
    s.add_argument("--cell", required=True)
    s.add_argument("--seed-block", type=int, nargs=2)
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (harness.ConfigError, KeyError, FileNotFoundError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, MemoryError, harness.ReplayMismatch,
            harness.CellError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
