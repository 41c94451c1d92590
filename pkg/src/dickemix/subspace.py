"""Unperturbed open Dicke dynamics restricted to one total-spin sector.

Basis: |S, M> (x) |n> with M = -S..S and n = 0..n_max, M-major.  Density
matrices are vectorized column-stacked, vec(A rho B) = (B^T (x) A) vec(rho).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import (ConvergenceError, CutoffExceededError,
                     DegenerateSteadyStateError, DimensionCapError,
                     GridTruncationError)
from .model import ModelParams, SpinSubspace

log = logging.getLogger(__name__)

MAX_DIM = 4000


def spin_matrices(two_s: int):
    """Sparse S_z, S_+, S_- for spin two_s/2, rows ordered M = -S..S."""
    s = two_s / 2
    m = np.arange(-s, s + 1)
    sz = sp.diags(m)
    # <M+1|S+|M> = sqrt(S(S+1) - M(M+1))
    amp = np.sqrt(np.maximum(s * (s + 1) - m[:-1] * (m[:-1] + 1), 0.0))
    splus = sp.diags(amp, -1, shape=(two_s + 1, two_s + 1))
    return sz.tocsr(), splus.tocsr(), splus.T.tocsr()


def boson_annihilation(n_max: int):
    return sp.diags(np.sqrt(np.arange(1, n_max + 1)), 1,
                    shape=(n_max + 1, n_max + 1)).tocsr()


@dataclass
class OperatorSet:
    two_s: int
    n_max: int
    a: sp.csr_matrix
    adag: sp.csr_matrix
    sx: sp.csr_matrix
    sy: sp.csr_matrix
    sz: sp.csr_matrix
    splus: sp.csr_matrix
    sminus: sp.csr_matrix
    s2: sp.csr_matrix

    @property
    def dim(self):
        return self.a.shape[0]

    @property
    def number(self):
        return (self.adag @ self.a).tocsr()


def build_operators(two_s: int, n_max: int, max_dim: int = MAX_DIM) -> OperatorSet:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    dim = (two_s + 1) * (n_max + 1)
    if dim > max_dim:
        raise DimensionCapError(f"dimension {dim} exceeds cap {max_dim}", dim=dim)
    sz, splus, sminus = spin_matrices(two_s)
    a1 = boson_annihilation(n_max)
    i_spin = sp.identity(two_s + 1, format="csr")
    i_ph = sp.identity(n_max + 1, format="csr")
    kron = lambda x, y: sp.kron(x, y, format="csr")  # noqa: E731
    Sz = kron(sz, i_ph)
    Sp = kron(splus, i_ph)
    Sm = kron(sminus, i_ph)
    a = kron(i_spin, a1)
    s = two_s / 2
    return OperatorSet(
        two_s=two_s, n_max=n_max, a=a, adag=a.T.tocsr(),
        sx=((Sp + Sm) * 0.5).tocsr(), sy=((Sp - Sm) * (-0.5j)).tocsr(), sz=Sz,
        splus=Sp, sminus=Sm,
        s2=(s * (s + 1)) * sp.identity(dim, format="csr"),
    )


def build_hamiltonian(params: ModelParams, sub: SpinSubspace, n_max: int,
                      max_dim: int = MAX_DIM):
    """Dicke Hamiltonian  w_c a^+a + 2 w_0 S_z + g/sqrt(N) (S+ + S-)(a + a^+)."""
    ops = build_operators(sub.two_s, n_max, max_dim)
    x = ops.a + ops.adag
    H = (params.omega_c * ops.number + 2 * params.omega_0 * ops.sz
         + params.g_prime * ((ops.splus + ops.sminus) @ x))
    return ops, H.tocsr()


def liouvillian(H, c_ops):
    """Column-stacking Liouvillian of  -i[H, .] + sum_k D[c_k]."""
    d = H.shape[0]
    eye = sp.identity(d, format="csr")
    L = -1j * (sp.kron(eye, H) - sp.kron(H.T, eye))
    for c in c_ops:
        cdc = (c.conj().T @ c).tocsr()
        L = L + sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
    return L.tocsr()


def subspace_liouvillian(params: ModelParams, sub: SpinSubspace, n_max: int,
                         max_dim: int = MAX_DIM):
    ops, H = build_hamiltonian(params, sub, n_max, max_dim)
    return ops, H, liouvillian(H, [math.sqrt(params.kappa) * ops.a])


def lindblad_rhs(rho, H, a, kappa):
    """d rho/dt = -i[H, rho] + kappa D[a] rho for dense rho, sparse hermitian H."""
    n = (a.conj().T @ a).tocsr()
    right = lambda op, x: (op.conj().T @ x.conj().T).conj().T   # x @ op  # noqa: E731
    ar = a @ rho
    return (-1j * (H @ rho - right(H, rho))
            + kappa * (right(a.conj().T, ar) - 0.5 * (n @ rho) - 0.5 * right(n, rho)))


def fock_cutoff_guess(params: ModelParams, sub: SpinSubspace) -> int:
    """Initial photon cutoff from the mean-field photon number of the sector.

    Above threshold the cavity holds a coherent amplitude |alpha|^2 with
    spin projection pinned at S_z* = -w0 (w_c^2 + k^2/4) N / (4 g^2 w_c).
    """
    s = sub.s
    n_ph = 0.0
    if params.g > 0 and s > 0:
        den = params.omega_c ** 2 + params.kappa ** 2 / 4
        sz_star = params.omega_0 * den * params.n_atoms / (4 * params.g ** 2 * params.omega_c)
        if sz_star < s:
            n_ph = 4 * params.g_prime ** 2 * (s * s - sz_star ** 2) / den
    return int(max(8, math.ceil(n_ph + 6 * math.sqrt(n_ph) + 6)))


@dataclass
class SteadyStateOptions:
    method: str = "krylov"          # "krylov" | "direct" (sparse LU) | "integrate"
    tol_residual: float = 1e-9
    n_max: Optional[int] = None      # fixed cutoff, disables the adaptive ladder
    fock_tail_tol: float = 1e-8
    max_dim: int = MAX_DIM
    t_chunk: float = 50.0
    t_max: float = 2e5
    rtol: float = 1e-10
    atol: float = 1e-12


@dataclass
class SubspaceMoments:
    two_s: int
    sz_mean: float
    sz2_mean: float
    photon_mean: float = 0.0
    fock_cutoff_used: int = 0
    converged: bool = True
    residual: float = 0.0
    method: str = "DM"
    n_atoms: Optional[int] = None

    @property
    def s(self):
        return self.two_s / 2

    def in_cone(self, tol: float = 1e-9) -> bool:
        s = self.s
        scale = max(1.0, s * s)
        return (abs(self.sz_mean) <= s + tol * max(1.0, s)
                and self.sz_mean ** 2 <= self.sz2_mean + tol * scale
                and self.sz2_mean <= s * s + tol * scale)


@dataclass
class SteadyStateResult:
    rho: np.ndarray
    moments: SubspaceMoments
    ops: OperatorSet = field(repr=False)
    params: ModelParams = None
    sub: SpinSubspace = None


def _parity_indices(two_s: int, n_max: int):
    m_index = np.repeat(np.arange(two_s + 1), n_max + 1)
    n = np.tile(np.arange(n_max + 1), two_s + 1)
    return (m_index + n) % 2


def _direct_null(L, d, parity):
    """Steady state from L vec(rho) = 0 with a unit-trace row, restricted to
    the parity-even block (the Dicke parity commutes with the generator)."""
    pi, pj = np.meshgrid(parity, parity, indexing="ij")
    # vec index k = j*d + i  (column stacking, row i, column j)
    keep = (pi == pj).T.ravel()
    idx = np.flatnonzero(keep)
    Lr = L[idx][:, idx].tocsc()
    diag_pos = np.searchsorted(idx, np.arange(d) * d + np.arange(d))
    trace_row = sp.csr_matrix((np.ones(d), (np.zeros(d, int), diag_pos)), shape=(1, len(idx)))
    # replace the equation of the first diagonal element by the trace condition
    r0 = diag_pos[0]
    A = sp.vstack([Lr[:r0], trace_row, Lr[r0 + 1:]]).tocsc()
    b = np.zeros(len(idx), dtype=complex)
    b[r0] = 1.0
    x = spla.spsolve(A, b)
    vec = np.zeros(d * d, dtype=complex)
    vec[idx] = x
    return vec.reshape(d, d).T


KRYLOV_MEMORY_BYTES = 2e9


def krylov_restart(d: int, budget: float = KRYLOV_MEMORY_BYTES) -> int:
    """GMRES restart length that keeps the Krylov basis inside ``budget``."""
    per_vector = 16 * d * d / 2          # complex, half the entries per parity block
    k = int(budget / per_vector) - 2
    if k < 8:
        raise DimensionCapError(
            f"Hilbert dimension {d} needs more than {budget / 1e9:.1f} GB of Krylov storage",
            dim=d)
    return min(k, 60)


def _krylov_null(H, a, kappa, parity, rtol=1e-13, maxiter=40, restart=None):
    """Steady state by GMRES in the eigenbasis of A = -iH - (kappa/2) a^+a.

    With rho = V X V^+ the stationarity condition reads
    X = T(X) := -kappa (B X B^+) / (lam_i + conj(lam_j)),  B = V^-1 a V,
    and GMRES solves (1 - T) X + u tr(X) = u.  Parity blocks are handled
    separately since a flips the Dicke parity.
    """
    d = H.shape[0]
    number = (a.conj().T @ a)
    A = (-1j * H - 0.5 * kappa * number).toarray()
    a_dense = a.toarray()
    blocks = [np.flatnonzero(parity == 0), np.flatnonzero(parity == 1)]
    V, Vinv, lam, G = [], [], [], []
    for idx in blocks:
        w, v = la.eig(A[np.ix_(idx, idx)])
        V.append(v)
        Vinv.append(la.inv(v))
        lam.append(w)
        G.append((v.conj().T @ v).T)
    # B[0]: odd -> even, B[1]: even -> odd
    B = [Vinv[0] @ a_dense[np.ix_(blocks[0], blocks[1])] @ V[1],
         Vinv[1] @ a_dense[np.ix_(blocks[1], blocks[0])] @ V[0]]
    D = [l[:, None] + l.conj()[None, :] for l in lam]
    sizes = [len(i) ** 2 for i in blocks]
    shapes = [(len(i), len(i)) for i in blocks]

    def split(x):
        return (x[:sizes[0]].reshape(shapes[0]), x[sizes[0]:].reshape(shapes[1]))

    def trace(x):
        xe, xo = split(x)
        return np.sum(xe * G[0]) + np.sum(xo * G[1])

    def apply_t(x):
        xe, xo = split(x)
        te = -kappa * (B[0] @ xo @ B[0].conj().T) / D[0]
        to = -kappa * (B[1] @ xe @ B[1].conj().T) / D[1]
        return np.concatenate([te.ravel(), to.ravel()])

    # u = Lyap^-1(rho_ref) with rho_ref = |S,-S><S,-S| (x) |0><0|; since
    # (1 - T) = Lyap^-1 L and L maps onto traceless operators, the bordered
    # system forces tr(X) = 1 and L(rho) = 0.
    col = Vinv[0][:, 0]
    u = np.concatenate([(np.outer(col, col.conj()) / D[0]).ravel(),
                        np.zeros(sizes[1], complex)])
    u /= trace(u)

    if restart is None:
        restart = krylov_restart(d)
    op = spla.LinearOperator((sum(sizes), sum(sizes)), dtype=complex,
                             matvec=lambda x: x - apply_t(x) + u * trace(x))
    x, info = spla.gmres(op, u, x0=u.copy(), rtol=rtol, atol=0.0, restart=restart,
                         maxiter=maxiter)
    xe, xo = split(x)
    rho = np.zeros((d, d), dtype=complex)
    rho[np.ix_(blocks[0], blocks[0])] = V[0] @ xe @ V[0].conj().T
    rho[np.ix_(blocks[1], blocks[1])] = V[1] @ xo @ V[1].conj().T
    return rho, info


def _integrate(L, rho0, opts: SteadyStateOptions):
    d = rho0.shape[0]

    def f(t, y):
        return L @ y

    y = rho0.T.ravel().astype(complex)
    t = 0.0
    res = np.inf
    while t < opts.t_max:
        sol = solve_ivp(f, (t, t + opts.t_chunk), y, method="DOP853",
                        rtol=opts.rtol, atol=opts.atol)
        if not sol.success:
            raise ConvergenceError(sol.message)
        y = sol.y[:, -1]
        rho = y.reshape(d, d).T
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
        y = rho.T.ravel()
        t += opts.t_chunk
        res = np.linalg.norm(L @ y)
        if res <= opts.tol_residual:
            return rho, res, t
    raise ConvergenceError(f"residual {res:.3e} above {opts.tol_residual:.1e} at t={t}",
                           residual=res)


DIRECT_DIM_LIMIT = 200


def _solve_fixed_cutoff(params, sub, n_max, opts):
    ops, H = build_hamiltonian(params, sub, n_max, opts.max_dim)
    d = ops.dim
    a = math.sqrt(params.kappa) * ops.a
    parity = _parity_indices(sub.two_s, n_max)
    if sub.two_s == 0:
        # spin singlet never couples: the cavity simply empties
        rho = np.zeros((d, d), dtype=complex)
        rho[0, 0] = 1.0
    elif opts.method == "krylov":
        rho, _ = _krylov_null(H, ops.a, params.kappa, parity)
    elif opts.method == "direct":
        if d > DIRECT_DIM_LIMIT:
            raise DimensionCapError(
                f"sparse LU limited to dimension {DIRECT_DIM_LIMIT}, got {d}", dim=d)
        rho = _direct_null(liouvillian(H, [a]), d, parity)
    elif opts.method == "integrate":
        rho0 = np.zeros((d, d), dtype=complex)
        rho0[0, 0] = 1.0          # |S, -S> (x) |0>
        rho, _, _ = _integrate(liouvillian(H, [a]), rho0, opts)
    else:
        raise ValueError(f"unknown method {opts.method!r}")
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = float(np.linalg.norm(lindblad_rhs(rho, H, ops.a, params.kappa)))
    return ops, rho, residual


def photon_populations(rho, two_s, n_max):
    diag = np.real(np.diag(rho)).reshape(two_s + 1, n_max + 1)
    return diag.sum(axis=0)


def steady_state(params: ModelParams, sub: SpinSubspace,
                 options: Optional[SteadyStateOptions] = None) -> SteadyStateResult:
    """Unique steady state of the cavity-damped Dicke model in one sector.

    The photon cutoff starts at :func:`fock_cutoff_guess` and grows by half
    until the two highest Fock populations fall below ``fock_tail_tol``.
    """
    opts = options or SteadyStateOptions()
    if sub.two_s > 0 and params.g == 0:
        raise DegenerateSteadyStateError(
            "g = 0 decouples the spin; every |S,M> (x) |0> is stationary")
    if opts.n_max is not None:
        ladder = [opts.n_max]
    else:
        ladder = []
        n = fock_cutoff_guess(params, sub)
        while (sub.two_s + 1) * (n + 1) <= opts.max_dim:
            ladder.append(n)
            n = int(math.ceil(n * 1.5))
        if not ladder:
            raise CutoffExceededError(
                f"initial cutoff already exceeds dimension cap {opts.max_dim}")
    for n_max in ladder:
        ops, rho, residual = _solve_fixed_cutoff(params, sub, n_max, opts)
        pops = photon_populations(rho, sub.two_s, n_max)
        tail = pops[-2:].sum()
        log.debug("S=%s n_max=%d tail=%.2e residual=%.2e", sub.s, n_max, tail, residual)
        if tail <= opts.fock_tail_tol or opts.n_max is not None:
            break
    else:
        raise CutoffExceededError(
            f"Fock tail {tail:.2e} still above {opts.fock_tail_tol:.0e} at cap",
            n_max=n_max, tail=tail)
    if residual > opts.tol_residual:
        raise ConvergenceError(f"steady-state residual {residual:.3e}", residual=residual)
    sz = ops.sz
    moments = SubspaceMoments(
        two_s=sub.two_s,
        sz_mean=float(np.real(np.sum(sz.diagonal() * np.diag(rho)))),
        sz2_mean=float(np.real(np.sum(sz.diagonal() ** 2 * np.diag(rho)))),
        photon_mean=float(np.real(np.sum(ops.number.diagonal() * np.diag(rho)))),
        fock_cutoff_used=n_max,
        converged=True,
        residual=residual,
        method="DM",
        n_atoms=sub.n_atoms,
    )
    return SteadyStateResult(rho=rho, moments=moments, ops=ops, params=params, sub=sub)


def reduced_photon_matrix(rho, two_s: int, n_max: int):
    """Partial trace over the spin factor."""
    r = rho.reshape(two_s + 1, n_max + 1, two_s + 1, n_max + 1)
    return np.einsum("inim->nm", r)


# --- Wigner function -------------------------------------------------------

@dataclass
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    w: np.ndarray      # shape (len(p), len(x))

    @property
    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.w, self.x, axis=1), self.p))

    def local_maxima(self, rel_threshold: float = 0.1):
        """Grid points that are strict maxima of their 8-neighbourhood and
        exceed ``rel_threshold`` times the global maximum."""
        w = self.w
        pad = np.pad(w, 1, constant_values=-np.inf)
        core = pad[1:-1, 1:-1]
        is_max = np.ones_like(w, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                nb = pad[1 + di:pad.shape[0] - 1 + di, 1 + dj:pad.shape[1] - 1 + dj]
                is_max &= core > nb
        is_max &= w >= rel_threshold * w.max()
        ii, jj = np.nonzero(is_max)
        return [(self.x[j], self.p[i], w[i, j]) for i, j in zip(ii, jj)]

    def to_rows(self):
        X, P = np.meshgrid(self.x, self.p)
        return np.column_stack([X.ravel(), P.ravel(), self.w.ravel()])


def default_extent(rho_ph) -> float:
    n = np.arange(rho_ph.shape[0])
    n_mean = float(np.real(np.sum(n * np.diag(rho_ph))))
    return max(5.0, 2 * math.sqrt(2 * n_mean) + 4.0)


def wigner_fock(rho_ph, x, p):
    """W(x, p) of a single-mode density matrix, a = (x + ip)/sqrt(2).

    Uses the standard Laguerre recurrence for the Fock-basis kernels.
    """
    rho_ph = np.asarray(rho_ph)
    dim = rho_ph.shape[0]
    X, P = np.meshgrid(x, p)
    A = (X + 1j * P) / np.sqrt(2)
    # two-index recurrence for the off-diagonal kernels; kept column-wise
    w_list = [np.zeros_like(A) for _ in range(dim)]
    w_list[0] = np.exp(-2.0 * np.abs(A) ** 2) / np.pi
    W = np.real(rho_ph[0, 0]) * np.real(w_list[0])
    for n in range(1, dim):
        w_list[n] = 2.0 * A * w_list[n - 1] / np.sqrt(n)
        W = W + 2 * np.real(rho_ph[0, n] * w_list[n])
    for m in range(1, dim):
        temp = w_list[m].copy()
        w_list[m] = (2 * np.conj(A) * temp - np.sqrt(m) * w_list[m - 1]) / np.sqrt(m)
        W = W + np.real(rho_ph[m, m] * w_list[m])
        for n in range(m + 1, dim):
            temp2 = (2 * A * w_list[n - 1] - np.sqrt(m) * temp) / np.sqrt(n)
            temp = w_list[n].copy()
            w_list[n] = temp2
            W = W + 2 * np.real(rho_ph[m, n] * w_list[n])
    return np.real(W)


def wigner_photon(rho, two_s: int, n_max: int, extent: Optional[float] = None,
                  points: int = 121, norm_tol: float = 0.01) -> WignerGrid:
    """Photon Wigner function of a sector state on a square grid."""
    rho_ph = reduced_photon_matrix(rho, two_s, n_max)
    return wigner_from_photon_matrix(rho_ph, extent, points, norm_tol)


def wigner_from_photon_matrix(rho_ph, extent=None, points=121, norm_tol=0.01) -> WignerGrid:
    if extent is None:
        extent = default_extent(rho_ph)
    x = np.linspace(-extent, extent, points)
    grid = WignerGrid(x=x, p=x.copy(), w=wigner_fock(rho_ph, x, x))
    total = grid.integral
    if abs(total - 1) > norm_tol:
        raise GridTruncationError(
            f"Wigner integral {total:.4f} deviates from 1 by more than {norm_tol}",
            integral=total)
    return grid
