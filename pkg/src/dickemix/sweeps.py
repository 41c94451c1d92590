"""Batch pipelines: moment tables, phase diagrams, f-sweeps and N-scaling.

Every row carries its method tag and a convergence flag.  Work items fan out
to a process pool when ``workers > 1``; results are gathered in input order
so the output does not depend on scheduling.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import dpt
from .cache import MomentCache, param_hash
from .errors import DickeError, MultimodalError
from .fitting import PowerLawFit, fit_distribution, fit_power_law
from .meanfield import mf1_photons_at, mf2_subspace_moments, perturbed_steady_state
from .model import (ModelParams, PerturbationSpec, SpinSubspace, critical_spin_value,
                    enumerate_subspaces)
from .subspace import SteadyStateOptions, SubspaceMoments, steady_state

log = logging.getLogger(__name__)

MF_TOLERANCES = {"tol_ss": 1e-8, "rtol": 1e-10}
PHOTON_THRESHOLD = 1e-5       # <a^+a>/N above this counts as superradiant


@dataclass
class SweepResult:
    name: str
    columns: list
    rows: list
    axes: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def as_array(self, name):
        return np.asarray(self.column(name), float)


def _pmap(fn: Callable, items: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------- moments ----

def _dm_moments(args):
    params, two_s, opts = args
    return steady_state(params, SpinSubspace(two_s, params.n_atoms), opts).moments


def _dm_tolerances(opts: SteadyStateOptions) -> dict:
    return {"tol_residual": opts.tol_residual, "fock_tail_tol": opts.fock_tail_tol}


def subspace_moments(params: ModelParams, method: str = "mf2",
                     subs: Optional[Iterable[SpinSubspace]] = None,
                     cache: Optional[MomentCache] = None, workers: int = 1,
                     dm_options: Optional[SteadyStateOptions] = None) -> list[SubspaceMoments]:
    """Steady <S_z>, <S_z^2>, <a^+a> for each sector, from the density-matrix
    solver ("dm") or the second-order mean field ("mf2")."""
    method = method.lower()
    subs = list(subs) if subs is not None else enumerate_subspaces(params.n_atoms)
    if method == "dm":
        opts = dm_options or SteadyStateOptions()
        tol = _dm_tolerances(opts)
        tag = "DM"
    elif method == "mf2":
        tol = dict(MF_TOLERANCES)
        tag = "MF2"
    else:
        raise ValueError(f"unknown moment source {method!r}")

    found = {}
    if cache is not None:
        for s in subs:
            hit = cache.get(params, s.two_s, tag, tol)
            if hit is not None:
                found[s.two_s] = hit
    todo = [s for s in subs if s.two_s not in found]
    if todo:
        log.info("computing %d %s sectors at N=%d", len(todo), tag, params.n_atoms)
        if method == "dm":
            fresh = _pmap(_dm_moments, [(params, s.two_s, opts) for s in todo], workers)
        else:
            fresh = mf2_subspace_moments(params, todo, tol_ss=tol["tol_ss"], rtol=tol["rtol"])
        for m in fresh:
            found[m.two_s] = m
            if cache is not None:
                cache.put(params, m, tol)
    return [found[s.two_s] for s in subs]


# ------------------------------------------------------- phase diagram ----

def _phase_column(args):
    params, g, method, s_grid = args
    p = params.with_(g=g)
    if method == "MF1":
        # weakly damped precession at strong coupling can outlast t_max; keep
        # the photon number and flag the cell rather than abort the sweep
        n, conv = mf1_photons_at(p, s_grid, return_converged=True)
    else:
        subs = enumerate_subspaces(p.n_atoms)
        moms = subspace_moments(p, "mf2", subs)
        n = np.array([m.photon_mean for m in moms])
        conv = np.array([m.converged for m in moms])
    return n / p.n_atoms, conv


def sweep_phase_diagram(params: ModelParams, g_grid: Sequence[float], method: str = "MF1",
                        s_grid: Optional[Sequence[float]] = None, workers: int = 1,
                        threshold: float = PHOTON_THRESHOLD) -> SweepResult:
    """<a^+a>/N over the (g, S~) plane.

    MF1 accepts any S~ grid (default: the sector values of ``params.n_atoms``);
    MF2 always runs on the sectors.
    """
    method = method.upper()
    if method not in ("MF1", "MF2"):
        raise ValueError("phase diagram method must be MF1 or MF2")
    if s_grid is None or method == "MF2":
        s_grid = [s.s_tilde for s in enumerate_subspaces(params.n_atoms)]
    s_grid = np.asarray(s_grid, float)
    cols = _pmap(_phase_column, [(params, float(g), method, s_grid) for g in g_grid], workers)
    rows = []
    for g, (n, conv) in zip(g_grid, cols):
        sc = critical_spin_value(params.with_(g=g)) if g > 0 else float("inf")
        for s, ni, ci in zip(s_grid, n, conv):
            rows.append([float(g), float(s), float(ni), method, bool(ci),
                         bool(ni > threshold), sc])
    return SweepResult(
        "phase-diagram",
        ["g", "s_tilde", "photon_per_atom", "method", "converged", "superradiant",
         "critical_s_tilde"],
        rows,
        axes={"g": [float(g) for g in g_grid], "s_tilde": s_grid.tolist()},
        provenance={"hash": param_hash(params, method=method, threshold=threshold),
                    "params": params.as_dict(), "method": method, "threshold": threshold})


def phase_boundary(result: SweepResult):
    """Per g: first S~ flagged superradiant (None if none) and the closed-form
    critical S~."""
    out = []
    g = np.array(result.column("g"))
    s = np.array(result.column("s_tilde"))
    sr = np.array(result.column("superradiant"), bool)
    crit = np.array(result.column("critical_s_tilde"))
    for gv in result.axes["g"]:
        sel = g == gv
        ss, flags = s[sel], sr[sel]
        order = np.argsort(ss)
        ss, flags = ss[order], flags[order]
        first = float(ss[np.argmax(flags)]) if flags.any() else None
        out.append((gv, first, float(crit[sel][0])))
    return out


def boundary_agreement(result: SweepResult, cells: int = 1):
    """Check each g column against the closed-form curve.

    A column passes when the first superradiant grid point lies above the
    critical value by at most ``cells`` grid steps, or when no grid point
    exceeds the critical value and none is flagged.
    """
    s_axis = np.sort(np.asarray(result.axes["s_tilde"]))
    step = float(np.max(np.diff(s_axis)))
    report = []
    for g, first, crit in phase_boundary(result):
        expected = s_axis[s_axis > crit]
        if first is None:
            ok = expected.size == 0
        else:
            ok = crit - step * 1e-9 <= first <= crit + cells * step
        report.append({"g": g, "first_superradiant": first, "critical": crit, "ok": bool(ok)})
    return report


def mf1_transition(params: ModelParams, s_grid: Sequence[float],
                   threshold: float = PHOTON_THRESHOLD) -> Optional[float]:
    """Smallest S~ on the grid where the MF1 cavity is macroscopically filled."""
    s_grid = np.asarray(s_grid, float)
    n = mf1_photons_at(params, s_grid) / params.n_atoms
    hit = np.flatnonzero(n > threshold)
    return float(s_grid[hit[0]]) if hit.size else None


# ----------------------------------------------------------- f-sweep ----

def f_grid_default():
    """Coarse steps up to 0.95, then 1e-3 steps up to 1."""
    coarse = np.round(np.arange(0.0, 0.95, 0.05), 10)
    fine = np.round(np.arange(0.95, 1.0 + 5e-4, 1e-3), 10)
    return np.concatenate([coarse, fine]).tolist()


def _distribution_summary(dist):
    try:
        fit = fit_distribution(dist)
        sigma_fit = fit.sigma
    except (MultimodalError, RuntimeError):
        sigma_fit = float("nan")
    return dist.mean(), dist.peak(), dist.std(), sigma_fit


def sweep_f(params: ModelParams, f_grid: Sequence[float], moments: Sequence[SubspaceMoments],
            gamma: float = 1e-4, n_slow: int = 4, direct: Optional[str] = None,
            source: str = "MF2", workers: int = 1) -> SweepResult:
    """DPT across dephasing fractions; ``direct`` ("MF1" or "MF2") adds the
    mean-field-at-gamma reference and the relative error E_r."""
    tag = f"DPT-{source.upper()}"
    o_phi = dpt.coupling_dephasing(moments, params.n_atoms)
    o_down = dpt.coupling_decay(moments, params.n_atoms)
    rows = []
    dists = {}
    refs = {}
    if direct:
        order = 1 if direct.upper() == "MF1" else 2
        vals = _pmap(_direct_point, [(params, gamma, f, order) for f in f_grid], workers)
        refs = dict(zip(f_grid, vals))
    for f in f_grid:
        pert = PerturbationSpec(gamma, f)
        C = dpt.mix(o_phi, o_down, pert)
        dist = dpt.null_distribution(C)
        dists[f] = dist
        mean, peak, std, sig = _distribution_summary(dist)
        k = min(n_slow, C.size)
        lam = dpt.slow_spectrum(C, k=k, vectors=False).eigenvalues.real
        lam = np.concatenate([lam, np.full(n_slow - k, np.nan)])
        ref = refs.get(f, (float("nan"), False))
        e_r = abs(mean - ref[0]) / ref[0] if np.isfinite(ref[0]) and ref[0] else float("nan")
        rows.append([float(f), mean, peak, std, sig, tag, True, ref[0], ref[1], e_r]
                    + [float(x) for x in lam])
    cols = ["f", "mean_s_tilde", "peak_s_tilde", "sigma_moment", "sigma_fit", "method",
            "converged", "direct_mean_s_tilde", "direct_converged", "e_r"]
    cols += [f"lambda_{i}" for i in range(n_slow)]
    res = SweepResult("sweep-f", cols, rows, axes={"f": list(map(float, f_grid))},
                      provenance={"hash": param_hash(params, gamma=gamma, source=source),
                                  "params": params.as_dict(), "gamma": gamma,
                                  "method": tag, "direct": direct})
    res.distributions = dists
    return res


def _direct_point(args):
    params, gamma, f, order = args
    try:
        _, s = perturbed_steady_state(params, PerturbationSpec(gamma, f), order=order)
        return float(s), True
    except DickeError as exc:
        log.warning("direct MF%d at f=%g failed: %s", order, f, exc)
        return float("nan"), False


# ----------------------------------------------------------- scaling ----

def scaling_sweep(base: ModelParams, n_list: Sequence[int], f: float = 0.0,
                  source: str = "mf2", cache: Optional[MomentCache] = None,
                  workers: int = 1) -> tuple[SweepResult, Optional[PowerLawFit],
                                             Optional[PowerLawFit]]:
    """Width of p(S) against N; returns the table plus power-law fits of the
    moment width and of the Gaussian width."""
    rows = []
    for n in n_list:
        p = base.with_(n_atoms=int(n))
        moms = subspace_moments(p, source, cache=cache, workers=workers)
        dist = dpt.null_distribution(
            dpt.coupling_matrix(moms, p.n_atoms, PerturbationSpec(1.0, f)))
        mean, peak, std, sig = _distribution_summary(dist)
        conv = all(m.converged for m in moms)
        rows.append([int(n), mean, peak, std, sig, f"DPT-{source.upper()}", conv])
    res = SweepResult("scaling", ["n_atoms", "mean_s_tilde", "peak_s_tilde", "sigma_moment",
                                  "sigma_fit", "method", "converged"], rows,
                      axes={"n_atoms": [int(n) for n in n_list]},
                      provenance={"hash": param_hash(base, f=f, source=source),
                                  "params": base.as_dict(), "f": f})
    n = res.as_array("n_atoms")
    fits = []
    for col in ("sigma_moment", "sigma_fit"):
        s = res.as_array(col)
        ok = np.isfinite(s) & (s > 0)
        fits.append(fit_power_law(n[ok], s[ok]) if ok.sum() >= 3 else None)
    return res, fits[0], fits[1]


def nodes_report(params: ModelParams, moments, f: float = 0.0, gamma: float = 1.0,
                 n_modes: int = 7):
    """Slow DPT eigenvalues in units of gamma and node counts of their
    eigenvectors."""
    C = dpt.coupling_matrix(moments, params.n_atoms, PerturbationSpec(gamma, f))
    spec = dpt.slow_spectrum(C, k=min(n_modes, C.size))
    out = []
    for i, lam in enumerate(spec.eigenvalues):
        out.append({"n": i, "lambda_over_gamma": float(lam.real / gamma),
                    "sign_changes": dpt.sign_changes(spec.right[:, i])})
    return out, spec
