"""First-order degenerate perturbation theory across total-spin sectors.

Local dephasing and local decay couple neighbouring sectors only.  The
resulting generator C acts on the sector weights p(S); its null vector is the
steady spin distribution and its slow eigenvalues approximate the slow part
of the full Liouvillian spectrum.  Matrix elements need nothing but the
steady-state <S_z>_S and <S_z^2>_S of each unperturbed sector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (MissingSubspaceError, MomentConeError, NonUniqueNullError,
                     SpectrumError)
from .model import PerturbationSpec, SpinSubspace, enumerate_subspaces

DENSE_EIG_LIMIT = 4000


@dataclass
class CouplingMatrix:
    n_atoms: int
    subspaces: list
    matrix: np.ndarray
    gamma: float = 1.0
    f: Optional[float] = None

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def s_tilde(self):
        return np.array([s.s_tilde for s in self.subspaces])

    def column_sums(self):
        return self.matrix.sum(axis=0)


@dataclass
class SpinDistribution:
    n_atoms: int
    subspaces: list
    p: np.ndarray
    clamped: float = 0.0

    @property
    def s_tilde(self):
        return np.array([s.s_tilde for s in self.subspaces])

    @property
    def two_s(self):
        return np.array([s.two_s for s in self.subspaces])

    @property
    def p_scaled(self):
        """p(S) times the number of sectors, O(1) as N grows."""
        return self.p * len(self.p)

    def mean(self):
        return mean_normalized_spin(self)

    def peak(self) -> float:
        return float(self.s_tilde[int(np.argmax(self.p))])

    def std(self) -> float:
        x = self.s_tilde
        mu = np.sum(self.p * x)
        return float(np.sqrt(max(np.sum(self.p * (x - mu) ** 2), 0.0)))


@dataclass
class LiouvillianSpectrum:
    eigenvalues: np.ndarray
    right: Optional[np.ndarray] = None      # columns, unit Euclidean norm
    left: Optional[np.ndarray] = None
    source: str = "dpt"
    max_imag: float = field(default=0.0)

    @property
    def decay_rates(self):
        return -self.eigenvalues.real

    @property
    def frequencies(self):
        return self.eigenvalues.imag


def _moment_arrays(moments, n_atoms: int, cone_tol: float = 1e-8):
    subs = enumerate_subspaces(n_atoms)
    by_two_s = {}
    for m in moments:
        by_two_s[m.two_s] = m
    missing = [s for s in subs if s.two_s not in by_two_s]
    if missing:
        raise MissingSubspaceError(
            f"no moments for {len(missing)} sectors, e.g. {missing[0]}",
            missing=[s.two_s for s in missing])
    sz = np.empty(len(subs))
    sz2 = np.empty(len(subs))
    for i, s in enumerate(subs):
        m = by_two_s[s.two_s]
        sz[i], sz2[i] = m.sz_mean, m.sz2_mean
        spin = s.s
        if s.two_s <= 1:
            # Sz^2 = S^2 is an operator identity for S = 0 and S = 1/2
            sz2[i] = spin * spin
        scale = cone_tol * max(1.0, spin * spin)
        if (sz[i] ** 2 > sz2[i] + scale or sz2[i] > spin * spin + scale
                or abs(sz[i]) > spin + scale):
            raise MomentConeError(
                f"moments of S={spin} violate <Sz>^2 <= <Sz^2> <= S^2: "
                f"<Sz>={sz[i]!r}, <Sz^2>={sz2[i]!r}", two_s=s.two_s)
    return subs, sz, sz2


def _safe_div(num, den):
    """num/den with 0/0 -> 0 (used at the S=0 boundary)."""
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    out = np.zeros(np.broadcast(num, den).shape)
    nz = den != 0
    np.divide(num, den, out=out, where=nz)
    return out


def _assemble(subs, diag, upper, lower, enforce_conservation):
    """upper[i] = C[i, i+1] (feed from S+1), lower[i] = C[i+1, i] (feed into S+1)."""
    n = len(subs)
    C = np.zeros((n, n))
    C[np.arange(n), np.arange(n)] = diag
    if n > 1:
        C[np.arange(n - 1), np.arange(1, n)] = upper
        C[np.arange(1, n), np.arange(n - 1)] = lower
    if enforce_conservation:
        off = C.sum(axis=0) - np.diag(C)
        C[np.arange(n), np.arange(n)] = -off
    return C


def coupling_dephasing(moments: Sequence, n_atoms: int,
                       enforce_conservation: bool = False) -> CouplingMatrix:
    """Unit-rate dephasing generator O_phi from sector moments."""
    subs, _, q = _moment_arrays(moments, n_atoms)
    S = np.array([s.s for s in subs])
    half_n = n_atoms / 2
    # O(S, S) = (N/2 + 1) <Sz^2>_S / (2 S (S+1)) - N/4
    diag = _safe_div((half_n + 1) * q, 2 * S * (S + 1)) - n_atoms / 4
    # O(S, S+1): weight flowing from S+1 down to S
    Sl, qu = S[:-1], q[1:]
    upper = (half_n + Sl + 2) / (2 * (Sl + 1) * (2 * Sl + 3)) * ((Sl + 1) ** 2 - qu)
    # O(S, S-1) written for the receiving sector S' = S+1
    Su, ql = S[1:], q[:-1]
    lower = (half_n - Su + 1) / (2 * Su * (2 * Su - 1)) * (Su ** 2 - ql)
    C = _assemble(subs, diag, upper, lower, enforce_conservation)
    return CouplingMatrix(n_atoms, subs, C)


def coupling_decay(moments: Sequence, n_atoms: int,
                   enforce_conservation: bool = False) -> CouplingMatrix:
    """Unit-rate local-decay generator O_down from sector moments."""
    subs, m, q = _moment_arrays(moments, n_atoms)
    S = np.array([s.s for s in subs])
    half_n = n_atoms / 2
    bracket = S * (S + 1) - q + m
    diag = _safe_div((half_n + 1) * bracket, 2 * S * (S + 1)) - m - half_n
    Sl, qu, mu = S[:-1], q[1:], m[1:]
    upper = ((half_n + Sl + 2) / (2 * (Sl + 1) * (2 * Sl + 3))
             * (Sl * (Sl + 1) + qu + (2 * Sl + 1) * mu))
    Su, ql, ml = S[1:], q[:-1], m[:-1]
    lower = ((half_n - Su + 1) / (2 * Su * (2 * Su - 1))
             * (Su * (Su + 1) + ql - (2 * Su + 1) * ml))
    C = _assemble(subs, diag, upper, lower, enforce_conservation)
    return CouplingMatrix(n_atoms, subs, C)


def mix(o_phi: CouplingMatrix, o_down: CouplingMatrix,
        pert: PerturbationSpec) -> CouplingMatrix:
    """C = gamma (f O_phi + (1 - f) O_down)."""
    if o_phi.matrix.shape != o_down.matrix.shape or o_phi.n_atoms != o_down.n_atoms:
        raise ValueError(
            f"dimension mismatch: {o_phi.matrix.shape} vs {o_down.matrix.shape}")
    C = pert.gamma * (pert.f * o_phi.matrix + (1 - pert.f) * o_down.matrix)
    return CouplingMatrix(o_phi.n_atoms, o_phi.subspaces, C, gamma=pert.gamma, f=pert.f)


def coupling_matrix(moments, n_atoms: int, pert: PerturbationSpec,
                    enforce_conservation: bool = False) -> CouplingMatrix:
    return mix(coupling_dephasing(moments, n_atoms, enforce_conservation),
               coupling_decay(moments, n_atoms, enforce_conservation), pert)


def closed_class_count(C: np.ndarray, rel_tol: float = 1e-13) -> int:
    """Number of closed communicating classes of a birth-death generator.

    Equals the dimension of its null space, so > 1 means the stationary
    distribution is not unique.
    """
    n = C.shape[0]
    scale = np.abs(C).max() if C.size else 0.0
    if scale == 0.0:
        return n
    thr = rel_tol * scale
    up = np.array([C[i + 1, i] > thr for i in range(n - 1)], dtype=bool)
    down = np.array([C[i, i + 1] > thr for i in range(n - 1)], dtype=bool)
    count = 0
    i = 0
    while i < n:
        j = i
        while j < n - 1 and up[j] and down[j]:
            j += 1
        # segment [i, j] communicates; closed if nothing leaks out
        leaks_left = i > 0 and down[i - 1]
        leaks_right = j < n - 1 and up[j]
        if not (leaks_left or leaks_right):
            count += 1
        i = j + 1
    return count


def null_distribution(c: CouplingMatrix, clamp_tol: float = 1e-12) -> SpinDistribution:
    """Stationary sector weights: C p = 0 with sum(p) = 1.

    One equation of the (sparse, tridiagonal) system is replaced by the
    normalization row, then solved directly.
    """
    C = c.matrix
    n = C.shape[0]
    if n == 1:
        return SpinDistribution(c.n_atoms, c.subspaces, np.ones(1))
    classes = closed_class_count(C)
    if classes != 1:
        raise NonUniqueNullError(
            f"generator has {classes} closed classes; null space is not one-dimensional",
            nullity=classes)
    A = sp.lil_matrix(sp.csr_matrix(C))
    # the last row is redundant given zero column sums
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[-1] = 1.0
    p = spla.spsolve(A.tocsc(), b)
    neg = p < 0
    clamped = float(-p[neg].min()) if neg.any() else 0.0
    if clamped > max(clamp_tol, 1e-8):
        raise NonUniqueNullError(f"null vector has negative weight {-clamped:.3e}")
    p = np.where(neg, 0.0, p)
    p /= p.sum()
    return SpinDistribution(c.n_atoms, c.subspaces, p, clamped=clamped)


def detailed_balance_distribution(c: CouplingMatrix) -> SpinDistribution:
    """Zero-flux solution p[i+1] C[i,i+1] = p[i] C[i+1,i], in log space.

    Independent route to the stationary weights of a birth-death generator.
    """
    C = c.matrix
    n = C.shape[0]
    logp = np.zeros(n)
    for i in range(n - 1):
        up, down = C[i + 1, i], C[i, i + 1]
        logp[i + 1] = logp[i] + np.log(up) - np.log(down)
    logp -= logp.max()
    p = np.exp(logp)
    return SpinDistribution(c.n_atoms, c.subspaces, p / p.sum())


def mean_normalized_spin(p: SpinDistribution) -> float:
    return float(np.sum(p.p * p.s_tilde))


def _symmetrized_tridiagonal(C):
    """Real symmetric tridiagonal similar to C when all neighbour rate
    products are positive; returns (diag, offdiag, log scale)."""
    d = np.diag(C).copy()
    up = np.diag(C, -1)
    down = np.diag(C, 1)
    if np.any(up <= 0) or np.any(down <= 0):
        return None
    e = np.sqrt(up * down)
    # right eigvec of C = diag(exp(logscale)) @ symmetric eigvec
    logscale = np.concatenate([[0.0], np.cumsum(0.5 * (np.log(up) - np.log(down)))])
    return d, e, logscale


def slow_spectrum(c: CouplingMatrix, k: Optional[int] = None, method: str = "auto",
                  vectors: bool = True) -> LiouvillianSpectrum:
    """The ``k`` eigenvalues of C with the largest real parts.

    ``method``: "dense" (nonsymmetric LAPACK), "tridiagonal" (similarity
    transform to a symmetric tridiagonal matrix, only when every neighbour
    rate product is positive), or "auto" (dense up to 4000 sectors, then
    tridiagonal).
    """
    C = c.matrix
    n = C.shape[0]
    k = n if k is None else k
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if method == "auto":
        method = "dense" if n <= DENSE_EIG_LIMIT else "tridiagonal"
    try:
        if method == "dense":
            if vectors:
                w, vl, vr = la.eig(C, left=True, right=True)
            else:
                w, vl, vr = la.eigvals(C), None, None
            order = np.lexsort((-w.imag, -w.real))[:k]
            w = w[order]
            if vectors:
                vr = vr[:, order]
                vl = vl[:, order]
        elif method == "tridiagonal":
            sym = _symmetrized_tridiagonal(C)
            if sym is None:
                raise SpectrumError("tridiagonal route needs positive neighbour rates")
            d, e, logscale = sym
            w, v = la.eigh_tridiagonal(d, e, select="i", select_range=(n - k, n - 1))
            order = np.argsort(-w)
            w = w[order].astype(complex)
            vr = vl = None
            if vectors:
                v = v[:, order]
                # rescale in log space to avoid overflow of exp(logscale)
                mag = np.log(np.abs(v) + 1e-300) + logscale[:, None]
                vr = np.sign(v) * np.exp(mag - mag.max(axis=0))
                vl = np.sign(v) * np.exp(np.log(np.abs(v) + 1e-300) - logscale[:, None]
                                         - (np.log(np.abs(v) + 1e-300)
                                            - logscale[:, None]).max(axis=0))
        else:
            raise ValueError(f"unknown method {method!r}")
    except (la.LinAlgError, ValueError) as exc:
        if isinstance(exc, ValueError) and "unknown method" in str(exc):
            raise
        raise SpectrumError(f"eigensolver failed: {exc}",
                            cond=float(np.linalg.cond(C)) if n <= 2000 else None) from exc
    if vectors and vr is not None:
        vr = vr / np.linalg.norm(vr, axis=0)
        # fix the sign so the largest-magnitude entry is positive
        idx = np.argmax(np.abs(vr), axis=0)
        vr = vr * np.sign(vr[idx, np.arange(vr.shape[1])].real)
        vl = vl / np.linalg.norm(vl, axis=0)
    return LiouvillianSpectrum(eigenvalues=w, right=vr, left=vl, source="dpt",
                               max_imag=float(np.abs(w.imag).max()) if len(w) else 0.0)


def sign_changes(v: np.ndarray, rel_floor: float = 1e-6) -> int:
    """Sign changes of a real vector, ignoring entries below rel_floor*max."""
    v = np.real(np.asarray(v))
    keep = np.abs(v) > rel_floor * np.abs(v).max()
    s = np.sign(v[keep])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def mixture_wigner(p: SpinDistribution, per_s_wigner: Sequence):
    """W = sum_S p(S) W_S on a shared grid."""
    from .subspace import WignerGrid
    if len(per_s_wigner) != len(p.p):
        raise ValueError("need one Wigner grid per sector")
    ref = per_s_wigner[0]
    for g in per_s_wigner[1:]:
        if g.w.shape != ref.w.shape or not (np.allclose(g.x, ref.x) and np.allclose(g.p, ref.p)):
            raise ValueError("Wigner grids must share axes")
    w = np.zeros_like(ref.w)
    for weight, g in zip(p.p, per_s_wigner):
        if weight:
            w += weight * g.w
    return WignerGrid(x=ref.x.copy(), p=ref.p.copy(), w=w)
