"""Brute-force reference: the full 2^N (x) Fock Liouvillian for N <= 4.

Local dephasing and local decay act atom by atom, so nothing here relies on
collective-spin algebra.  Spectra are taken inside the permutation-invariant
operator sector (rho = P rho P^+ for every atom swap), where the unperturbed
steady states are exactly one per total spin; the reduction is an exact
restriction because every term of the generator commutes with atom swaps.
Vectorization is column stacking, vec(A rho B) = (B^T (x) A) vec(rho).
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dpt import LiouvillianSpectrum, SpinDistribution
from .errors import DimensionCapError, NonUniqueNullError, SpectrumError
from .model import ModelParams, PerturbationSpec, enumerate_subspaces
from .subspace import boson_annihilation, fock_cutoff_guess, liouvillian

MAX_ATOMS = 4
MAX_HILBERT_DIM = 2000

SIGMA_PLUS = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))   # |1><0|
SIGMA_Z = sp.csr_matrix(np.diag([-1.0, 1.0]))


def _site_operator(op, site, n_atoms):
    mats = [sp.identity(2, format="csr")] * n_atoms
    mats[site] = op
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def permutation_matrix(n_atoms: int, i: int, j: int):
    """Swap of atoms i and j on the 2^N spin space (atom 0 = leading bit)."""
    dim = 2 ** n_atoms
    cols = np.arange(dim)
    bits = (cols[:, None] >> (n_atoms - 1 - np.arange(n_atoms))) & 1
    swapped = bits.copy()
    swapped[:, [i, j]] = bits[:, [j, i]]
    rows = swapped @ (1 << (n_atoms - 1 - np.arange(n_atoms)))
    return sp.csr_matrix((np.ones(dim), (rows, cols)), shape=(dim, dim))


@dataclass
class FullSpaceOperators:
    n_atoms: int
    n_max: int
    sigma_plus: list
    sigma_minus: list
    sigma_z: list
    a: sp.csr_matrix
    s2_spin: np.ndarray               # S^2 on the spin factor only
    permutations: dict = field(default_factory=dict)

    @property
    def spin_dim(self):
        return 2 ** self.n_atoms

    @property
    def dim(self):
        return self.spin_dim * (self.n_max + 1)

    def lift(self, spin_op):
        return sp.kron(spin_op, sp.identity(self.n_max + 1), format="csr")


def full_space_operators(n_atoms: int, n_max: int) -> FullSpaceOperators:
    if n_atoms > MAX_ATOMS:
        raise DimensionCapError(f"oracle is limited to N <= {MAX_ATOMS}", n_atoms=n_atoms)
    dim = 2 ** n_atoms * (n_max + 1)
    if dim > MAX_HILBERT_DIM:
        raise DimensionCapError(f"Hilbert dimension {dim} exceeds {MAX_HILBERT_DIM}", dim=dim)
    sp_list = [_site_operator(SIGMA_PLUS, k, n_atoms) for k in range(n_atoms)]
    sz_list = [_site_operator(SIGMA_Z, k, n_atoms) for k in range(n_atoms)]
    sm_list = [s.T.tocsr() for s in sp_list]
    Sx = 0.5 * sum(s + m for s, m in zip(sp_list, sm_list))
    Sy = -0.5j * sum(s - m for s, m in zip(sp_list, sm_list))
    Sz = 0.5 * sum(sz_list)
    s2 = (Sx @ Sx + Sy @ Sy + Sz @ Sz).toarray()
    a = sp.kron(sp.identity(2 ** n_atoms), boson_annihilation(n_max), format="csr")
    perms = {(i, j): permutation_matrix(n_atoms, i, j)
             for i, j in itertools.combinations(range(n_atoms), 2)}
    return FullSpaceOperators(n_atoms, n_max, sp_list, sm_list, sz_list, a,
                              np.real_if_close(s2), perms)


def full_hamiltonian(params: ModelParams, ops: FullSpaceOperators):
    Sz = 0.5 * sum(ops.sigma_z)
    Sp = sum(ops.sigma_plus)
    x = ops.a + ops.a.T
    n = ops.a.T @ ops.a
    H = (params.omega_c * n + 2 * params.omega_0 * ops.lift(Sz)
         + params.g_prime * (ops.lift(Sp + Sp.T) @ x))
    return H.tocsr()


def collapse_operators(params: ModelParams, pert: PerturbationSpec, ops: FullSpaceOperators):
    c_ops = [math.sqrt(params.kappa) * ops.a]
    if pert.gamma_phi > 0:
        amp = math.sqrt(pert.gamma_phi / 4)
        c_ops += [amp * ops.lift(s) for s in ops.sigma_z]
    if pert.gamma_down > 0:
        amp = math.sqrt(pert.gamma_down)
        c_ops += [amp * ops.lift(s) for s in ops.sigma_minus]
    return c_ops


def _orbit_basis(n_atoms: int):
    """Orthonormal basis of permutation-invariant spin operators.

    Columns are normalized orbit sums of |i><j| under simultaneous atom
    permutations; returned as (rows i, cols j, column index, weight) triplets
    plus the excitation difference exc(i) - exc(j) of each column.
    """
    dim = 2 ** n_atoms
    bits = (np.arange(dim)[:, None] >> (n_atoms - 1 - np.arange(n_atoms))) & 1
    orbits = defaultdict(list)
    for i in range(dim):
        for j in range(dim):
            kinds = 2 * bits[i] + bits[j]
            key = tuple(np.bincount(kinds, minlength=4))
            orbits[key].append((i, j))
    keys = sorted(orbits)
    entries = []
    exc_diff = []
    for col, key in enumerate(keys):
        members = orbits[key]
        w = 1.0 / math.sqrt(len(members))
        for i, j in members:
            entries.append((i, j, col, w))
        # key counts pairs (bit_i, bit_j) = 00, 01, 10, 11
        exc_diff.append(key[2] - key[1])
    return entries, np.array(exc_diff), len(keys)


@dataclass
class VectorizedLiouvillian:
    matrix: sp.csr_matrix                 # full d^2 x d^2
    basis: sp.csr_matrix                  # d^2 x n_sym, orthonormal columns
    superparity: np.ndarray               # parity label of each basis column
    ops: FullSpaceOperators
    params: ModelParams
    pert: PerturbationSpec
    H: Optional[sp.csr_matrix] = None
    _reduced: Optional[sp.csr_matrix] = None

    @property
    def dim(self):
        return self.ops.dim

    @property
    def reduced(self):
        if self._reduced is None:
            self._reduced = (self.basis.T @ self.matrix @ self.basis).tocsc()
        return self._reduced

    def trace_row(self):
        """Left identity vector: vec(1)^+."""
        d = self.dim
        v = np.zeros(d * d)
        v[np.arange(d) * d + np.arange(d)] = 1.0
        return v

    def to_matrix(self, reduced_vec):
        d = self.dim
        return np.asarray(self.basis @ reduced_vec).reshape(d, d).T

    def to_reduced(self, rho):
        return self.basis.T @ rho.T.ravel()


def oracle_cutoff(params: ModelParams) -> int:
    return fock_cutoff_guess(params, enumerate_subspaces(params.n_atoms)[-1])


def build_liouvillian(params: ModelParams, pert: PerturbationSpec,
                      n_max: Optional[int] = None) -> VectorizedLiouvillian:
    """Full Liouvillian with cavity loss plus per-atom dephasing and decay."""
    if params.n_atoms > MAX_ATOMS:
        raise DimensionCapError(f"oracle is limited to N <= {MAX_ATOMS}",
                                n_atoms=params.n_atoms)
    n_max = oracle_cutoff(params) if n_max is None else n_max
    ops = full_space_operators(params.n_atoms, n_max)
    H = full_hamiltonian(params, ops)
    L = liouvillian(H, collapse_operators(params, pert, ops))

    entries, exc_diff, n_orb = _orbit_basis(params.n_atoms)
    nph = n_max + 1
    d = ops.dim
    rows, cols, vals, parity = [], [], [], []
    ii = np.array([e[0] for e in entries])
    jj = np.array([e[1] for e in entries])
    oc = np.array([e[2] for e in entries])
    ww = np.array([e[3] for e in entries])
    col = 0
    for n in range(nph):
        for m in range(nph):
            # |i,n><j,m| -> vec index (j*nph + m) * d + (i*nph + n)
            rows.append((jj * nph + m) * d + (ii * nph + n))
            cols.append(oc + col)
            vals.append(ww)
            parity.append((exc_diff + n - m) % 2)
            col += n_orb
    basis = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(d * d, col))
    return VectorizedLiouvillian(L, basis, np.concatenate(parity), ops, params, pert, H)


def _sector_eigs(Lr, k, sigma):
    n = Lr.shape[0]
    if n <= 600:
        w = la.eigvals(Lr.toarray())
        return w
    k = min(k, n - 2)
    lu = spla.splu((Lr - sigma * sp.identity(n, format="csc")).tocsc())
    op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=complex)
    mu = spla.eigs(op, k=k, which="LM", return_eigenvectors=False, tol=1e-12,
                   maxiter=5000)
    return sigma + 1.0 / mu


def slow_cluster(liouv: VectorizedLiouvillian, k: int, n_candidates: int = 24,
                 sigma: float = 1e-3) -> LiouvillianSpectrum:
    """The k eigenvalues with the largest real parts.

    Shift-invert Arnoldi about a small positive shift collects the
    ``n_candidates`` eigenvalues nearest the origin in each parity sector of
    the permutation-invariant block; they are then ranked by real part.
    """
    Lr = liouv.reduced
    found = []
    try:
        for par in (0, 1):
            idx = np.flatnonzero(liouv.superparity == par)
            block = Lr[idx][:, idx]
            found.append(_sector_eigs(block, max(n_candidates, k + 4), sigma))
    except (RuntimeError, spla.ArpackError, la.LinAlgError) as exc:
        raise SpectrumError(f"oracle eigensolver failed: {exc}") from exc
    w = np.concatenate(found)
    order = np.lexsort((-w.imag, -w.real))[:k]
    w = w[order]
    return LiouvillianSpectrum(eigenvalues=w, source="oracle",
                               max_imag=float(np.abs(w.imag).max()))


def steady_state_full(liouv: VectorizedLiouvillian):
    """Null vector of the permutation-invariant, parity-even block,
    renormalized to unit trace and made hermitian."""
    Lr = liouv.reduced
    idx = np.flatnonzero(liouv.superparity == 0)
    block = Lr[idx][:, idx].tolil()
    tr = liouv.trace_row() @ liouv.basis[:, idx]
    r0 = int(np.argmax(np.abs(tr)))
    block[r0, :] = tr
    b = np.zeros(len(idx), complex)
    b[r0] = 1.0
    lu = spla.splu(block.tocsc())
    x = lu.solve(b)
    vec = np.zeros(Lr.shape[0], complex)
    vec[idx] = x
    rho = liouv.to_matrix(vec)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = float(np.linalg.norm(liouv.matrix @ rho.T.ravel()))
    return rho, residual


def check_unique_steady_state(liouv: VectorizedLiouvillian, tol: float = 1e-10) -> int:
    """Count numerically zero eigenvalues in the invariant sector."""
    spec = slow_cluster(liouv, k=min(6, liouv.reduced.shape[0]))
    scale = max(1.0, liouv.pert.gamma)
    nullity = int(np.count_nonzero(np.abs(spec.eigenvalues) < tol * scale))
    if nullity != 1:
        raise NonUniqueNullError(f"steady state nullity {nullity}", nullity=nullity)
    return nullity


def spin_projectors(ops: FullSpaceOperators):
    """Projectors onto the total-spin eigenspaces of the spin factor."""
    w, v = np.linalg.eigh(ops.s2_spin)
    out = {}
    for sub in enumerate_subspaces(ops.n_atoms):
        s = sub.s
        sel = np.abs(w - s * (s + 1)) < 1e-8
        vs = v[:, sel]
        out[sub.two_s] = vs @ vs.conj().T
    return out


def spin_resolved_population(rho, ops: FullSpaceOperators) -> SpinDistribution:
    """p(S) = Tr(P_S rho) with the photon factor traced out."""
    nph = ops.n_max + 1
    ds = ops.spin_dim
    rho_spin = np.einsum("injn->ij", rho.reshape(ds, nph, ds, nph))
    subs = enumerate_subspaces(ops.n_atoms)
    proj = spin_projectors(ops)
    p = np.array([np.real(np.trace(proj[s.two_s] @ rho_spin)) for s in subs])
    p = np.clip(p, 0.0, None)
    return SpinDistribution(ops.n_atoms, subs, p / p.sum())


def permutation_defect(rho, ops: FullSpaceOperators) -> float:
    worst = 0.0
    for P in ops.permutations.values():
        Pf = ops.lift(P)
        worst = max(worst, float(np.linalg.norm(Pf @ rho @ Pf.T - rho)))
    return worst
