"""Figure pipelines: each id writes CSV + JSON + SVG and a provenance sidecar."""
from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, dpt, io, oracle, svg
from .cache import MomentCache, param_hash
from .model import ModelParams, PerturbationSpec, critical_spin_value, enumerate_subspaces
from .subspace import (default_extent, reduced_photon_matrix, steady_state,
                       wigner_from_photon_matrix)
from .sweeps import (boundary_agreement, f_grid_default, nodes_report, scaling_sweep,
                     subspace_moments, sweep_f, sweep_phase_diagram)

log = logging.getLogger(__name__)

FIGURES = ("eig-vs-gamma", "pS-vs-f", "meanS-vs-f", "pS-scaling", "beta-fit",
           "phase-diagram", "wigner-grid", "f0.999-scaling", "dm-scaling",
           "spectrum-vs-f", "eigvecs")

# Default parameter sets per figure; some are reduced for desk-scale runs (see README).
DEFAULTS = {
    "eig-vs-gamma": dict(n_atoms=4, f=1.0, gammas=[1e-4, 3e-4, 1e-3, 3e-3, 1e-2]),
    "pS-vs-f": dict(n_atoms=40, fs=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0], source="dm"),
    "meanS-vs-f": dict(n_atoms=40, source="dm", direct=None),
    "pS-scaling": dict(n_list=[50, 100, 200, 1000], fs=[0.0, 1.0], source="mf2"),
    "beta-fit": dict(n_list=list(range(100, 2001, 100)), f=0.0, source="mf2"),
    "phase-diagram": dict(n_atoms=1000, g_grid=np.round(np.arange(0.05, 1.8001, 0.05), 10).tolist()),
    "wigner-grid": dict(n_atoms=40, s_tilde=[0.1, 0.35, 0.5, 1.0], fs=[0.0, 0.5, 1.0]),
    "f0.999-scaling": dict(n_list=[1000, 10000], f=0.999, source="mf2"),
    "dm-scaling": dict(n_list=[8, 12, 16, 20], f=1.0, source="dm"),
    "spectrum-vs-f": dict(n_atoms=1000, n_slow=6, source="mf2"),
    "eigvecs": dict(n_atoms=1000, f=0.0, n_vecs=4, source="mf2"),
}


class FigureContext:
    def __init__(self, fig_id, params, out_dir, cache, workers, opts):
        self.fig_id = fig_id
        self.params = params
        self.out = Path(out_dir) / fig_id
        self.out.mkdir(parents=True, exist_ok=True)
        self.cache = cache
        self.workers = workers
        self.opts = opts
        self.files = []
        self.methods = set()

    def csv(self, name, columns, rows):
        self.files.append(str(io.write_csv(self.out / f"{name}.csv", columns, rows)))

    def json(self, name, obj):
        self.files.append(str(io.write_json(self.out / f"{name}.json", obj)))

    def svg(self, name, text):
        self.files.append(str(io.atomic_write_text(self.out / f"{name}.svg", text)))

    def moments(self, n_atoms, source):
        p = self.params.with_(n_atoms=n_atoms)
        self.methods.add(source.upper())
        return subspace_moments(p, source, cache=self.cache, workers=self.workers)


def _dist_series(dists):
    return {k: (d.s_tilde, d.p_scaled) for k, d in dists.items()}


def _eig_vs_gamma(ctx):
    o = ctx.opts
    p = ctx.params.with_(n_atoms=o["n_atoms"])
    moms = ctx.moments(p.n_atoms, "dm")
    rows, series = [], {}
    base = dpt.slow_spectrum(dpt.coupling_matrix(moms, p.n_atoms, PerturbationSpec(1.0, o["f"])),
                             vectors=False)
    ctx.methods.update({"DPT-DM", "ORACLE"})
    n_s = len(moms)
    for gam in o["gammas"]:
        L = oracle.build_liouvillian(p, PerturbationSpec(gam, o["f"]))
        spec = oracle.slow_cluster(L, n_s + 1)
        for i, lam in enumerate(spec.eigenvalues):
            rows.append([gam, i, lam.real, lam.imag, "oracle"])
        for i, lam in enumerate(base.eigenvalues):
            rows.append([gam, i, gam * lam.real, gam * lam.imag, "dpt"])
    ctx.csv("eigenvalues", ["gamma", "index", "re_lambda", "im_lambda", "source"], rows)
    for src in ("oracle", "dpt"):
        for i in range(n_s + (src == "oracle")):
            pts = [(r[0], r[2]) for r in rows if r[4] == src and r[1] == i]
            if pts:
                x, y = zip(*pts)
                series[f"{src} {i}"] = (np.log10(x), y)
    ctx.svg("eigenvalues", svg.line_plot(series, "slow eigenvalues", "log10 gamma",
                                         "Re lambda", markers=True))


def _pS_vs_f(ctx):
    o = ctx.opts
    n = o["n_atoms"]
    moms = ctx.moments(n, o["source"])
    dists = {}
    for f in o["fs"]:
        d = dpt.null_distribution(dpt.coupling_matrix(moms, n, PerturbationSpec(1.0, f)))
        dists[f"f={f:g}"] = d
        ctx.csv(f"p_f{f:g}", io.DISTRIBUTION_COLUMNS, io.distribution_rows(d))
    ctx.methods.add(f"DPT-{o['source'].upper()}")
    ctx.svg("p_vs_f", svg.line_plot(_dist_series(dists), f"p(S), N={n}", "S~", "p scaled"))


def _sweep_table(ctx, res, name):
    ctx.csv(name, res.columns, res.rows)
    ctx.methods.update(str(m) for m in res.column("method"))


def _meanS_vs_f(ctx):
    o = ctx.opts
    n = o["n_atoms"]
    p = ctx.params.with_(n_atoms=n)
    moms = ctx.moments(n, o["source"])
    res = sweep_f(p, o.get("f_grid") or f_grid_default(), moms, direct=o["direct"],
                  source=o["source"], workers=ctx.workers)
    _sweep_table(ctx, res, "mean_vs_f")
    series = {"DPT": (res.as_array("f"), res.as_array("mean_s_tilde"))}
    if o["direct"]:
        series[o["direct"]] = (res.as_array("f"), res.as_array("direct_mean_s_tilde"))
    ctx.svg("mean_vs_f", svg.line_plot(series, f"<S~> vs f, N={n}", "f", "<S~>"))


def _scaling_dists(ctx, n_list, fs, source):
    dists = {}
    rows = []
    for n in n_list:
        moms = ctx.moments(n, source)
        for f in fs:
            d = dpt.null_distribution(dpt.coupling_matrix(moms, n, PerturbationSpec(1.0, f)))
            dists[f"N={n} f={f:g}"] = d
            ctx.csv(f"p_N{n}_f{f:g}", io.DISTRIBUTION_COLUMNS, io.distribution_rows(d))
            rows.append([n, f, d.mean(), d.peak(), d.std()])
    ctx.methods.add(f"DPT-{source.upper()}")
    ctx.csv("summary", ["n_atoms", "f", "mean_s_tilde", "peak_s_tilde", "sigma_moment"], rows)
    ctx.svg("p_scaled", svg.line_plot(_dist_series(dists), "scaled p(S)", "S~", "p scaled"))


def _pS_scaling(ctx):
    o = ctx.opts
    _scaling_dists(ctx, o["n_list"], o["fs"], o["source"])


def _f0999(ctx):
    o = ctx.opts
    _scaling_dists(ctx, o["n_list"], [o["f"]], o["source"])


def _dm_scaling(ctx):
    o = ctx.opts
    _scaling_dists(ctx, o["n_list"], [o["f"]], o["source"])


def _beta_fit(ctx):
    o = ctx.opts
    res, fit_m, fit_g = scaling_sweep(ctx.params, o["n_list"], o["f"], o["source"],
                                      cache=ctx.cache, workers=ctx.workers)
    _sweep_table(ctx, res, "widths")
    ctx.json("fit", {"moment_width": fit_m.as_dict() if fit_m else None,
                     "gaussian_width": fit_g.as_dict() if fit_g else None})
    n = res.as_array("n_atoms")
    series = {"sigma (moments)": (np.log(n), np.log(res.as_array("sigma_moment")))}
    if fit_m:
        series["fit"] = (np.log(n), np.log(fit_m.prefactor) + fit_m.exponent * np.log(n))
    ctx.svg("beta_fit", svg.line_plot(series, "ln sigma vs ln N", "ln N", "ln sigma", markers=True))


def _phase_diagram(ctx):
    o = ctx.opts
    p = ctx.params.with_(n_atoms=o["n_atoms"])
    res = sweep_phase_diagram(p, o["g_grid"], "MF1", o.get("s_grid"), workers=ctx.workers)
    _sweep_table(ctx, res, "phase_diagram")
    report = boundary_agreement(res)
    ctx.json("boundary", report)
    g = np.asarray(res.axes["g"])
    s = np.asarray(res.axes["s_tilde"])
    z = res.as_array("photon_per_atom").reshape(len(g), len(s)).T
    sc = np.array([critical_spin_value(p.with_(g=gv)) for gv in g])
    ctx.svg("phase_diagram", svg.heatmap(g, s, z, "<a+a>/N (MF1)", "g", "S~", overlay=(g, sc)))


def _wigner_grid(ctx):
    o = ctx.opts
    n = o["n_atoms"]
    p = ctx.params.with_(n_atoms=n)
    ctx.methods.add("DM")
    subs = enumerate_subspaces(n)
    wanted = {min(subs, key=lambda s: abs(s.s_tilde - t)) for t in o["s_tilde"]}
    grids, maxima = {}, []
    points = o.get("points", 121)
    mixture_needed = bool(o.get("fs"))
    todo = subs if mixture_needed else sorted(wanted)
    photon = {}
    for sub in todo:
        r = steady_state(p, sub)
        photon[sub.two_s] = (r.moments, reduced_photon_matrix(r.rho, sub.two_s,
                                                              r.moments.fock_cutoff_used))
    # one grid for all sectors so the mixture can be summed pointwise
    extent = o.get("extent") or max(default_extent(rp) for _, rp in photon.values())
    for two_s, (mom, rp) in photon.items():
        grids[two_s] = (mom, wigner_from_photon_matrix(rp, extent=extent, points=points))
    for sub in sorted(wanted):
        grid = grids[sub.two_s][1]
        ctx.csv(f"wigner_2S{sub.two_s}", ["x", "p", "w"], grid.to_rows())
        maxima.append({"two_s": sub.two_s, "s_tilde": sub.s_tilde,
                       "n_maxima": len(grid.local_maxima())})
    if mixture_needed:
        moms = [grids[s.two_s][0] for s in subs]
        ctx.methods.add("DPT-DM")
        for f in o["fs"]:
            d = dpt.null_distribution(dpt.coupling_matrix(moms, n, PerturbationSpec(1.0, f)))
            w = dpt.mixture_wigner(d, [grids[s.two_s][1] for s in subs])
            ctx.csv(f"wigner_mix_f{f:g}", ["x", "p", "w"], w.to_rows())
            maxima.append({"f": f, "n_maxima": len(w.local_maxima())})
    ctx.json("lobes", maxima)


def _spectrum_vs_f(ctx):
    o = ctx.opts
    n = o["n_atoms"]
    p = ctx.params.with_(n_atoms=n)
    moms = ctx.moments(n, o["source"])
    res = sweep_f(p, o.get("f_grid") or np.round(np.linspace(0, 1, 21), 10).tolist(), moms,
                  gamma=1.0, n_slow=o["n_slow"], source=o["source"])
    _sweep_table(ctx, res, "spectrum_vs_f")
    f = res.as_array("f")
    series = {f"lambda_{i}": (f, res.as_array(f"lambda_{i}")) for i in range(o["n_slow"])}
    ctx.svg("spectrum_vs_f", svg.line_plot(series, "slow DPT eigenvalues / gamma", "f",
                                           "Re lambda"))


def _eigvecs(ctx):
    o = ctx.opts
    n = o["n_atoms"]
    p = ctx.params.with_(n_atoms=n)
    moms = ctx.moments(n, o["source"])
    report, spec = nodes_report(p, moms, o["f"], 1.0, o["n_vecs"])
    ctx.methods.add(f"DPT-{o['source'].upper()}")
    st = np.array([s.s_tilde for s in enumerate_subspaces(n)])
    cols = ["two_s", "s_tilde"] + [f"v{i}" for i in range(len(report))]
    rows = [[int(round(t * n)), t] + [float(spec.right[j, i].real) for i in range(len(report))]
            for j, t in enumerate(st)]
    ctx.csv("eigenvectors", cols, rows)
    ctx.csv("eigenvalues", io.SPECTRUM_COLUMNS, io.spectrum_rows(spec))
    ctx.json("nodes", report)
    series = {f"v{i}": (st, spec.right[:, i].real) for i in range(len(report))}
    ctx.svg("eigenvectors", svg.line_plot(series, "slow eigenvectors", "S~", "p_n(S)"))


PIPELINES = {
    "eig-vs-gamma": _eig_vs_gamma, "pS-vs-f": _pS_vs_f, "meanS-vs-f": _meanS_vs_f,
    "pS-scaling": _pS_scaling, "beta-fit": _beta_fit, "phase-diagram": _phase_diagram,
    "wigner-grid": _wigner_grid, "f0.999-scaling": _f0999, "dm-scaling": _dm_scaling,
    "spectrum-vs-f": _spectrum_vs_f, "eigvecs": _eigvecs,
}


def reproduce_figure(fig_id: str, out_dir, params: Optional[ModelParams] = None,
                     overrides: Optional[dict] = None, cache_dir=None, workers: int = 1):
    """Run one figure pipeline; returns the list of files written."""
    if fig_id not in PIPELINES:
        raise KeyError(f"unknown figure id {fig_id!r}; choose from {', '.join(FIGURES)}")
    params = params or ModelParams(g=0.9)
    opts = dict(DEFAULTS[fig_id])
    opts.update(overrides or {})
    cache = MomentCache(cache_dir) if cache_dir else None
    ctx = FigureContext(fig_id, params, out_dir, cache, workers, opts)
    t0 = time.time()
    PIPELINES[fig_id](ctx)
    ctx.json("provenance", {
        "figure": fig_id, "version": __version__, "params": params.as_dict(),
        "options": opts, "methods": sorted(ctx.methods),
        "hash": param_hash(params, figure=fig_id, options=opts),
        "elapsed_s": time.time() - t0, "files": list(ctx.files)})
    return ctx.files
