"""First- and second-order mean-field equations for the open Dicke model.

States are carried as real vectors so many subspaces integrate together in
one vectorized ODE: column ``b`` of a ``(dim, B)`` array is one independent
system.  MF1 keeps <a>, <S_x>, <S_y>, <S_z>; MF2 adds the second moments
needed for a Z2-symmetric cumulant closure in which odd first moments stay
zero and three-operator averages factorize onto <S_z>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import root

from .errors import ConvergenceError, DivergedError, LimitCycleError
from .model import ModelParams, NO_PERTURBATION, PerturbationSpec, SpinSubspace
from .subspace import SubspaceMoments

MF1_DIM = 5
MF2_DIM = 17
SEED_FRACTION = 1e-3


@dataclass
class MF1State:
    a_mean: complex
    sx: float
    sy: float
    sz: float
    n_atoms: int

    def to_vector(self) -> np.ndarray:
        return np.array([self.a_mean.real, self.a_mean.imag, self.sx, self.sy, self.sz])

    @classmethod
    def from_vector(cls, v, n_atoms: int) -> "MF1State":
        v = np.asarray(v, float)
        return cls(complex(v[0], v[1]), float(v[2]), float(v[3]), float(v[4]), n_atoms)

    @property
    def photon_number(self) -> float:
        return abs(self.a_mean) ** 2

    @property
    def spin_length(self) -> float:
        return math.sqrt(self.sx ** 2 + self.sy ** 2 + self.sz ** 2)

    def is_valid(self) -> bool:
        vals = self.to_vector()
        return bool(np.all(np.isfinite(vals))) and self.spin_length <= self.n_atoms / 2 * (1 + 1e-6)


@dataclass
class MF2State:
    a_mean: complex
    sx: float
    sy: float
    sz: float
    ada: float
    aa: complex
    a_sx: complex
    a_sy: complex
    sx2: float
    sy2: float
    sz2: float
    sxsy: complex
    n_atoms: int

    def to_vector(self) -> np.ndarray:
        return np.array([
            self.a_mean.real, self.a_mean.imag, self.sx, self.sy, self.sz, self.ada,
            self.aa.real, self.aa.imag, self.a_sx.real, self.a_sx.imag,
            self.a_sy.real, self.a_sy.imag, self.sx2, self.sy2, self.sz2,
            self.sxsy.real, self.sxsy.imag,
        ])

    @classmethod
    def from_vector(cls, v, n_atoms: int) -> "MF2State":
        v = np.asarray(v, float)
        c = lambda i: complex(v[i], v[i + 1])   # noqa: E731
        return cls(c(0), float(v[2]), float(v[3]), float(v[4]), float(v[5]), c(6), c(8),
                   c(10), float(v[12]), float(v[13]), float(v[14]), c(15), n_atoms)

    @property
    def photon_number(self) -> float:
        return self.ada

    @property
    def casimir(self) -> float:
        return self.sx2 + self.sy2 + self.sz2

    def is_valid(self, tol: float = 1e-9) -> bool:
        vals = self.to_vector()
        return (bool(np.all(np.isfinite(vals))) and self.ada >= -tol
                and min(self.sx2, self.sy2, self.sz2) >= -tol)


# ---------------------------------------------------------------- RHS ----

def _rates(params: ModelParams, pert: PerturbationSpec):
    return params.g_prime, pert.gamma_tilde, pert.gamma_down


def mf1_rhs_vec(y: np.ndarray, params: ModelParams, pert: PerturbationSpec = NO_PERTURBATION):
    """Vectorized MF1 right-hand side, y of shape (5,) or (5, B)."""
    gp, gt, gd = _rates(params, pert)
    wc, w0, k, n = params.omega_c, params.omega_0, params.kappa, params.n_atoms
    a = y[0] + 1j * y[1]
    sx, sy, sz = y[2], y[3], y[4]
    da = -(1j * wc + k / 2) * a - 2j * gp * sx
    out = np.empty_like(y)
    out[0], out[1] = da.real, da.imag
    out[2] = -2 * w0 * sy - gt * sx
    out[3] = 2 * w0 * sx - 4 * gp * a.real * sz - gt * sy
    out[4] = 4 * gp * a.real * sy - gd * (sz + n / 2)
    return out


def mf1_rhs(state: MF1State, params: ModelParams,
            pert: PerturbationSpec = NO_PERTURBATION) -> MF1State:
    return MF1State.from_vector(mf1_rhs_vec(state.to_vector(), params, pert), state.n_atoms)


def mf2_rhs_vec(y: np.ndarray, params: ModelParams, pert: PerturbationSpec = NO_PERTURBATION):
    """Vectorized MF2 right-hand side, y of shape (17,) or (17, B)."""
    gp, gt, gd = _rates(params, pert)
    wc, w0, k, n = params.omega_c, params.omega_0, params.kappa, params.n_atoms
    c = (n - 1) / n
    a = y[0] + 1j * y[1]
    sx, sy, sz, ada = y[2], y[3], y[4], y[5]
    aa = y[6] + 1j * y[7]
    a_sx = y[8] + 1j * y[9]
    a_sy = y[10] + 1j * y[11]
    sx2, sy2, sz2 = y[12], y[13], y[14]
    sxsy = y[15] + 1j * y[16]

    out = np.empty_like(y)
    da = -(1j * wc + k / 2) * a - 2j * gp * sx
    out[0], out[1] = da.real, da.imag
    out[2] = -2 * w0 * sy - gt * sx
    out[3] = 2 * w0 * sx - 4 * gp * a.real * sz - gt * sy     # <a S_z> ~ <a><S_z>
    out[4] = 4 * gp * a_sy.real - gd * (sz + n / 2)
    out[5] = -k * ada - 4 * gp * a_sx.imag
    daa = -(2j * wc + k) * aa - 4j * gp * a_sx
    out[6], out[7] = daa.real, daa.imag
    damp = 1j * wc + k / 2 + gt
    dasx = -damp * a_sx - 2 * w0 * a_sy - 2j * gp * sx2
    out[8], out[9] = dasx.real, dasx.imag
    dasy = -damp * a_sy + 2 * w0 * a_sx - 2 * gp * sz * (aa + ada) - 2j * gp * (sxsy - 1j * sz)
    out[10], out[11] = dasy.real, dasy.imag
    # 2<SxSy> - i<Sz> is real when Im<SxSy> = <Sz>/2; keep only its real part
    prec = 2 * w0 * (2 * sxsy - 1j * sz).real
    drive = 8 * gp * c * sz * a_sy.real
    out[12] = -prec - gt * (2 * sx2 - n / 2)
    out[13] = prec - drive - gt * (2 * sy2 - n / 2)
    out[14] = drive - gd * (2 * sz2 - n / 2 + (n - 1) * sz)
    dxy = (2 * w0 * (sx2 - sy2) - 4 * gp * c * sz * a_sx.real + 2j * gp * a_sy.real
           - gt * (2 * sxsy - 1j * sz) - 0.5j * gd * (sz + n / 2))
    out[15], out[16] = dxy.real, dxy.imag
    return out


def mf2_rhs(state: MF2State, params: ModelParams,
            pert: PerturbationSpec = NO_PERTURBATION) -> MF2State:
    return MF2State.from_vector(mf2_rhs_vec(state.to_vector(), params, pert), state.n_atoms)


# ------------------------------------------------------- initial states ----

def init_dicke_state(sub: SpinSubspace) -> MF2State:
    """|S, M=-S> with the cavity in vacuum."""
    s = sub.s
    return MF2State(0j, 0.0, 0.0, -s, 0.0, 0j, 0j, 0j, s / 2, s / 2, s * s, -0.5j * s,
                    sub.n_atoms)


def init_mf1_state(sub: SpinSubspace, params: ModelParams,
                   seed: float = SEED_FRACTION) -> MF1State:
    """Spin vector of length S tipped by ``seed`` toward x, with the cavity
    in the coherent state slaved to that tilt."""
    return MF1State.from_vector(mf1_seed_vector(sub.s, params, seed), sub.n_atoms)


def mf1_seed_vector(spin_length, params: ModelParams, seed: float = SEED_FRACTION):
    """Seeded MF1 initial vectors for any (array of) classical spin length."""
    s = np.asarray(spin_length, float)
    sx = seed * s
    sz = -np.sqrt(np.maximum(s * s - sx * sx, 0.0))
    a = -2j * params.g_prime * sx / (1j * params.omega_c + params.kappa / 2)
    return np.array([a.real, a.imag, sx, np.zeros_like(s), sz])


# -------------------------------------------------------- integration ----

@dataclass
class MFRun:
    """Batch integration outcome.  ``y`` has shape (dim, B)."""
    y: np.ndarray
    t_final: float
    converged: np.ndarray
    polished: np.ndarray
    max_rel_change: np.ndarray
    limit_cycle: bool = False


def _rel_change(y_new, y_old):
    scale = np.maximum(np.abs(y_new).max(axis=0), 1e-300)
    return np.abs(y_new - y_old).max(axis=0) / scale


def integrate_to_steady(rhs_vec: Callable, y0: np.ndarray, params: ModelParams,
                        pert: PerturbationSpec = NO_PERTURBATION, *, tol_ss: float = 1e-8,
                        window: Optional[float] = None, t_max: float = 5e3,
                        rtol: float = 1e-10, atol: float = 1e-12, polish: bool = True,
                        polish_tol: float = 1e-10, polish_max_step: float = 1e-3,
                        raise_on_failure: bool = True) -> MFRun:
    """Integrate a batch of systems until every column stops moving.

    The test compares the state with its value one ``window`` (default
    50/kappa) earlier.  Columns still drifting at ``t_max`` get a root-finding
    polish started from their last state when ``polish`` is set.
    """
    y0 = np.asarray(y0, float)
    single = y0.ndim == 1
    y = y0[:, None].copy() if single else y0.copy()
    dim, batch = y.shape
    window = 50.0 / params.kappa if window is None else window
    size_scale = max(params.n_atoms, 1.0)

    def f(_t, flat):
        return rhs_vec(flat.reshape(dim, batch), params, pert).ravel()

    stepper = DOP853(f, 0.0, y.ravel(), t_bound=t_max, rtol=rtol, atol=atol)
    t = 0.0
    change = np.full(batch, np.inf)
    history = []
    while stepper.status == "running":
        msg = stepper.step()
        if stepper.status == "failed":
            raise DivergedError(f"integrator failed: {msg}", t=stepper.t)
        if not np.all(np.isfinite(stepper.y)) or np.abs(stepper.y).max() > 1e8 * size_scale:
            raise DivergedError("mean-field moments diverged", t=stepper.t)
        if stepper.t < t + window:
            continue
        dense = stepper.dense_output()
        done = False
        # one step may cross several checkpoints
        while stepper.t >= t + window:
            y_new = dense(t + window).reshape(dim, batch)
            change = _rel_change(y_new, y)
            history.append(change)
            y, t = y_new, t + window
            if np.all(change < tol_ss):
                done = True
                break
        if done:
            break
    converged = change < tol_ss
    polished = np.zeros(batch, bool)
    if polish and not converged.all():
        for b in np.flatnonzero(~converged):
            sol = root(lambda v: rhs_vec(v, params, pert), y[:, b], method="lm",
                       options={"xtol": 1e-14, "ftol": 1e-14})
            res = np.abs(rhs_vec(sol.x, params, pert)).max()
            # a root far from the trajectory is some other (often unphysical)
            # fixed point, not the one being approached
            near = (np.linalg.norm(sol.x - y[:, b])
                    <= polish_max_step * max(np.linalg.norm(y[:, b]), 1.0))
            if np.all(np.isfinite(sol.x)) and near and res < polish_tol * size_scale:
                y[:, b] = sol.x
                polished[b] = True
                converged[b] = True

    limit_cycle = False
    if not converged.all():
        bad = ~converged
        # persistent oscillation: drift over the last five windows no smaller
        # than over the five before (weakly damped modes still shrink)
        if len(history) >= 10:
            recent = np.mean(history[-5:], axis=0)
            before = np.mean(history[-10:-5], axis=0)
            limit_cycle = bool(np.any(recent[bad] >= 0.99 * before[bad]))
        if raise_on_failure:
            cls = LimitCycleError if limit_cycle else ConvergenceError
            raise cls(f"{int(bad.sum())} of {batch} systems not steady by t={t:g}",
                      t_final=t, max_rel_change=float(change[bad].max()))
    out = MFRun(y[:, 0] if single else y, t, converged, polished, change, limit_cycle)
    return out


def mf1_batch_init(subs: Sequence[SpinSubspace], params: ModelParams,
                   seed: float = SEED_FRACTION) -> np.ndarray:
    return mf1_seed_vector([s.s for s in subs], params, seed)


def mf2_batch_init(subs: Sequence[SpinSubspace]) -> np.ndarray:
    return np.stack([init_dicke_state(s).to_vector() for s in subs], axis=1)


# ---------------------------------------------------------- observables ----

def total_spin_from_moments(state) -> float:
    """Normalized total spin S~.

    MF2 inverts the quadratic Casimir, S(S+1) = <S^2>.  MF1 carries a
    classical spin vector, whose length already is S.
    """
    half_n = state.n_atoms / 2
    if isinstance(state, MF2State):
        s2 = max(state.casimir, 0.0)
        return (-1 + math.sqrt(1 + 4 * s2)) / 2 / half_n
    return state.spin_length / half_n


def to_subspace_moments(state: MF2State, sub: SpinSubspace,
                        converged: bool = True, residual: float = float("nan")) -> SubspaceMoments:
    return SubspaceMoments(two_s=sub.two_s, sz_mean=state.sz, sz2_mean=state.sz2,
                           photon_mean=state.ada, fock_cutoff_used=0, converged=converged,
                           residual=residual, method="MF2", n_atoms=sub.n_atoms)


def mf2_subspace_moments(params: ModelParams, subs: Sequence[SpinSubspace],
                         **kwargs) -> list[SubspaceMoments]:
    """Unperturbed MF2 steady states of many sectors in one batch."""
    subs = list(subs)
    run = integrate_to_steady(mf2_rhs_vec, mf2_batch_init(subs), params, NO_PERTURBATION,
                              **kwargs)
    y = run.y.reshape(MF2_DIM, -1)
    out = []
    for b, sub in enumerate(subs):
        st = MF2State.from_vector(y[:, b], params.n_atoms)
        res = float(np.abs(mf2_rhs_vec(y[:, b], params)).max())
        out.append(to_subspace_moments(st, sub, bool(run.converged[b]), res))
    return out


def mf1_subspace_photons(params: ModelParams, subs: Sequence[SpinSubspace],
                         **kwargs) -> np.ndarray:
    """Unperturbed MF1 steady photon number per sector."""
    return mf1_photons_at(params, [s.s_tilde for s in subs], **kwargs)


def mf1_photons_at(params: ModelParams, s_tilde, return_converged: bool = False,
                   **kwargs):
    """Unperturbed MF1 steady photon number for classical spins of length
    S~ N/2; S~ need not sit on a sector value.

    With ``return_converged`` the integration does not raise on stragglers
    and the per-point convergence flags are returned as well.
    """
    s = np.atleast_1d(np.asarray(s_tilde, float)) * params.n_atoms / 2
    if return_converged:
        kwargs.setdefault("raise_on_failure", False)
    run = integrate_to_steady(mf1_rhs_vec, mf1_seed_vector(s, params), params,
                              NO_PERTURBATION, **kwargs)
    y = run.y.reshape(MF1_DIM, -1)
    n = y[0] ** 2 + y[1] ** 2
    return (n, np.asarray(run.converged, bool)) if return_converged else n


def perturbed_steady_state(params: ModelParams, pert: PerturbationSpec, order: int = 1,
                           start: Optional[SpinSubspace] = None, **kwargs):
    """Mean-field steady state of the full perturbed system, started from
    the fully symmetric ground state (or ``start``).  Returns the state and
    its normalized total spin."""
    sub = start or SpinSubspace(params.n_atoms, params.n_atoms)
    kwargs.setdefault("t_max", 40.0 / max(pert.gamma, 1e-12))
    if order == 1:
        y0 = init_mf1_state(sub, params).to_vector()
        run = integrate_to_steady(mf1_rhs_vec, y0, params, pert, **kwargs)
        state = MF1State.from_vector(run.y, params.n_atoms)
    elif order == 2:
        run = integrate_to_steady(mf2_rhs_vec, init_dicke_state(sub).to_vector(), params,
                                  pert, **kwargs)
        state = MF2State.from_vector(run.y, params.n_atoms)
    else:
        raise ValueError("order must be 1 or 2")
    return state, total_spin_from_moments(state)


__all__ = [
    "MF1State", "MF2State", "mf1_rhs", "mf2_rhs", "mf1_rhs_vec", "mf2_rhs_vec",
    "init_dicke_state", "init_mf1_state", "integrate_to_steady", "MFRun",
    "total_spin_from_moments", "to_subspace_moments", "mf2_subspace_moments",
    "mf1_subspace_photons", "mf1_photons_at", "mf1_seed_vector", "perturbed_steady_state",
]
