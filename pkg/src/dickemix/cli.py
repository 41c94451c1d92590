"""Command-line entry point: ``dickemix <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dpt, io
from .cache import MomentCache
from .errors import DickeError
from .model import (ModelParams, PerturbationSpec, critical_coupling_for, critical_spin_value,
                    enumerate_subspaces)

PARAM_KEYS = {"omega_c": float, "omega_0": float, "g": float, "kappa": float, "n_atoms": int}


def read_config(path) -> dict:
    """Plain ``key = value`` lines; ``#`` starts a comment.  Dashes and
    underscores in keys are interchangeable."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _float_list(text):
    return [float(x) for x in str(text).replace(",", " ").split()]


def _int_list(text):
    return [int(x) for x in str(text).replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model / run options")
    g.add_argument("--omega-c", type=float)
    g.add_argument("--omega-0", type=float)
    g.add_argument("--g", type=float)
    g.add_argument("--kappa", type=float)
    g.add_argument("--n-atoms", type=int)
    g.add_argument("--out", default=None, help="output directory (default: results)")
    g.add_argument("--cache", default=None, help="moment cache directory")
    g.add_argument("--workers", type=int, default=None)
    g.add_argument("--config", default=None, help="key=value file; flags override it")
    g.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="dickemix",
                                 description="Spin-mixing steady states of the open Dicke model.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("critical-curve", parents=[common], help="closed-form critical curve")
    c.add_argument("--points", type=int, default=200)

    c = sub.add_parser("subspace", parents=[common], help="steady-state moments per sector")
    c.add_argument("--method", choices=["dm", "mf2"], default="dm")
    c.add_argument("--two-s", type=_int_list, default=None, help="sectors as 2S values")

    c = sub.add_parser("dpt", parents=[common], help="spin distribution and slow spectrum")
    c.add_argument("--f", type=float, default=1.0)
    c.add_argument("--gamma", type=float, default=1e-4)
    c.add_argument("--moments", choices=["dm", "mf2"], default="mf2")
    c.add_argument("--n-slow", type=int, default=6)

    c = sub.add_parser("oracle", parents=[common], help="full-space Liouvillian (N <= 4)")
    c.add_argument("--f", type=float, default=1.0)
    c.add_argument("--gamma", type=float, default=1e-4)
    c.add_argument("--n-max", type=int, default=None)
    c.add_argument("--k", type=int, default=None)

    c = sub.add_parser("sweep-f", parents=[common], help="DPT across dephasing fractions")
    c.add_argument("--f-grid", type=_float_list, default=None)
    c.add_argument("--gamma", type=float, default=1e-4)
    c.add_argument("--moments", choices=["dm", "mf2"], default="mf2")
    c.add_argument("--direct", choices=["MF1", "MF2"], default=None)

    c = sub.add_parser("sweep-phase", parents=[common], help="(g, S~) phase diagram")
    c.add_argument("--g-grid", type=_float_list, default=None)
    c.add_argument("--method", choices=["MF1", "MF2"], default="MF1")

    c = sub.add_parser("scaling", parents=[common], help="width of p(S) against N")
    c.add_argument("--n-list", type=_int_list, default=list(range(100, 2001, 100)))
    c.add_argument("--f", type=float, default=0.0)
    c.add_argument("--moments", choices=["dm", "mf2"], default="mf2")

    c = sub.add_parser("wigner", parents=[common], help="cavity Wigner function of one sector")
    c.add_argument("--two-s", type=int, required=True)
    c.add_argument("--extent", type=float, default=None)
    c.add_argument("--points", type=int, default=121)

    from .figures import FIGURES
    c = sub.add_parser("figure", parents=[common], help="reproduce a figure's data")
    c.add_argument("figure_id", choices=FIGURES)
    c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a pipeline option (value parsed as a number list if possible)")
    return ap


def resolve_params(args) -> ModelParams:
    cfg = read_config(args.config) if args.config else {}
    vals = {}
    for key, typ in PARAM_KEYS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            vals[key] = flag
        elif key in cfg:
            vals[key] = typ(cfg[key])
    fallback = {"out": "results", "cache": None, "workers": 1}
    for key, default in fallback.items():
        if getattr(args, key) is None:
            raw = cfg.get(key, default)
            setattr(args, key, int(raw) if key == "workers" else raw)
    return ModelParams(**vals)


def _parse_override(text):
    key, _, val = text.partition("=")
    items = val.replace(",", " ").split()
    try:
        nums = [float(x) if any(c in x for c in ".eE") else int(x) for x in items]
    except ValueError:
        return key, val
    if len(nums) == 1 and "," not in val:
        return key, nums[0]
    return key, nums


def _cmd_critical_curve(args, params, out):
    s = np.linspace(1.0 / args.points, 1.0, args.points)
    rows = [[st, critical_coupling_for(params, st)] for st in s]
    io.write_csv(out / "critical_curve.csv", ["s_tilde", "g_c"], rows)
    summary = {"g_c_at_s1": critical_coupling_for(params, 1.0)}
    if params.g > 0:
        summary["s_tilde_c"] = critical_spin_value(params)
    io.write_json(out / "critical_curve.json", summary)
    print(io.dumps(summary), end="")


def _cmd_subspace(args, params, out, cache):
    from .sweeps import subspace_moments
    subs = enumerate_subspaces(params.n_atoms)
    if args.two_s:
        subs = [s for s in subs if s.two_s in set(args.two_s)]
    moms = subspace_moments(params, args.method, subs, cache=cache, workers=args.workers)
    path = io.write_csv(out / f"moments_{args.method}_N{params.n_atoms}.csv",
                        io.MOMENT_COLUMNS, io.moment_rows(moms))
    print(path)


def _cmd_dpt(args, params, out, cache):
    from .sweeps import subspace_moments
    moms = subspace_moments(params, args.moments, cache=cache, workers=args.workers)
    C = dpt.coupling_matrix(moms, params.n_atoms, PerturbationSpec(args.gamma, args.f))
    dist = dpt.null_distribution(C)
    spec = dpt.slow_spectrum(C, k=min(args.n_slow, C.size), vectors=False)
    tag = f"N{params.n_atoms}_f{args.f:g}"
    io.write_csv(out / f"distribution_{tag}.csv", io.DISTRIBUTION_COLUMNS,
                 io.distribution_rows(dist))
    io.write_csv(out / f"spectrum_{tag}.csv", io.SPECTRUM_COLUMNS, io.spectrum_rows(spec))
    summary = {"method": f"DPT-{args.moments.upper()}", "mean_s_tilde": dist.mean(),
               "peak_s_tilde": dist.peak(), "sigma": dist.std(), "f": args.f,
               "gamma": args.gamma}
    io.write_json(out / f"summary_{tag}.json", summary)
    print(io.dumps(summary), end="")


def _cmd_oracle(args, params, out):
    from . import oracle
    pert = PerturbationSpec(args.gamma, args.f)
    L = oracle.build_liouvillian(params, pert, args.n_max)
    k = args.k or len(enumerate_subspaces(params.n_atoms)) + 1
    spec = oracle.slow_cluster(L, k)
    tag = f"N{params.n_atoms}_f{args.f:g}_G{args.gamma:g}"
    io.write_csv(out / f"oracle_spectrum_{tag}.csv", io.SPECTRUM_COLUMNS, io.spectrum_rows(spec))
    if args.gamma > 0:
        rho, res = oracle.steady_state_full(L)
        dist = oracle.spin_resolved_population(rho, L.ops)
        io.write_csv(out / f"oracle_distribution_{tag}.csv", io.DISTRIBUTION_COLUMNS,
                     io.distribution_rows(dist))
        print(io.dumps({"p": dist.p, "residual": res}), end="")
    print(io.dumps({"eigenvalues": [[z.real, z.imag] for z in spec.eigenvalues]}), end="")


def _cmd_sweep_f(args, params, out, cache):
    from .sweeps import f_grid_default, subspace_moments, sweep_f
    moms = subspace_moments(params, args.moments, cache=cache, workers=args.workers)
    res = sweep_f(params, args.f_grid or f_grid_default(), moms, gamma=args.gamma,
                  direct=args.direct, source=args.moments, workers=args.workers)
    print(io.write_csv(out / f"sweep_f_N{params.n_atoms}.csv", res.columns, res.rows))
    io.write_json(out / f"sweep_f_N{params.n_atoms}.json", res.provenance)


def _cmd_sweep_phase(args, params, out):
    from .sweeps import boundary_agreement, sweep_phase_diagram
    grid = args.g_grid or np.round(np.arange(0.05, 1.8001, 0.05), 10).tolist()
    res = sweep_phase_diagram(params, grid, args.method, workers=args.workers)
    print(io.write_csv(out / f"phase_{args.method}_N{params.n_atoms}.csv", res.columns, res.rows))
    report = boundary_agreement(res)
    io.write_json(out / f"phase_{args.method}_N{params.n_atoms}.json",
                  {"provenance": res.provenance, "boundary": report})
    bad = [r for r in report if not r["ok"]]
    print(f"boundary columns off the closed-form curve: {len(bad)} of {len(report)}")


def _cmd_scaling(args, params, out, cache):
    from .sweeps import scaling_sweep
    res, fit_m, fit_g = scaling_sweep(params, args.n_list, args.f, args.moments, cache=cache,
                                      workers=args.workers)
    io.write_csv(out / f"scaling_f{args.f:g}.csv", res.columns, res.rows)
    summary = {"moment_width": fit_m.as_dict() if fit_m else None,
               "gaussian_width": fit_g.as_dict() if fit_g else None}
    io.write_json(out / f"scaling_f{args.f:g}.json", summary)
    print(io.dumps(summary), end="")


def _cmd_wigner(args, params, out):
    from .model import SpinSubspace
    from .subspace import reduced_photon_matrix, steady_state, wigner_from_photon_matrix
    sub = SpinSubspace(args.two_s, params.n_atoms)
    r = steady_state(params, sub)
    grid = wigner_from_photon_matrix(
        reduced_photon_matrix(r.rho, sub.two_s, r.moments.fock_cutoff_used),
        extent=args.extent, points=args.points)
    path = io.write_csv(out / f"wigner_N{params.n_atoms}_2S{args.two_s}.csv", ["x", "p", "w"],
                        grid.to_rows())
    print(path)
    print(f"local maxima: {len(grid.local_maxima())}")


def _cmd_figure(args, params, out):
    from .figures import reproduce_figure
    overrides = dict(_parse_override(s) for s in args.set)
    files = reproduce_figure(args.figure_id, out, params, overrides,
                             cache_dir=args.cache, workers=args.workers)
    for f in files:
        print(f)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        params = resolve_params(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        cache = MomentCache(args.cache) if args.cache else None
        cmd = args.command
        if cmd == "critical-curve":
            _cmd_critical_curve(args, params, out)
        elif cmd == "subspace":
            _cmd_subspace(args, params, out, cache)
        elif cmd == "dpt":
            _cmd_dpt(args, params, out, cache)
        elif cmd == "oracle":
            _cmd_oracle(args, params, out)
        elif cmd == "sweep-f":
            _cmd_sweep_f(args, params, out, cache)
        elif cmd == "sweep-phase":
            _cmd_sweep_phase(args, params, out)
        elif cmd == "scaling":
            _cmd_scaling(args, params, out, cache)
        elif cmd == "wigner":
            _cmd_wigner(args, params, out)
        elif cmd == "figure":
            _cmd_figure(args, params, out)
    except DickeError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
