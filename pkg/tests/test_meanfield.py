import itertools
import math

import numpy as np
import pytest

from dickemix import oracle
from dickemix.meanfield import (MF1State, MF2_DIM, MF2State, init_dicke_state, init_mf1_state,
                                integrate_to_steady, mf1_photons_at, mf1_rhs_vec,
                                mf2_rhs_vec, mf2_subspace_moments, total_spin_from_moments)
from dickemix.model import NO_PERTURBATION, ModelParams, PerturbationSpec, SpinSubspace
from dickemix.subspace import steady_state


# ------------------------------------------------ exact-derivative oracle ----

def _site_permutation(n, perm):
    dim = 2 ** n
    P = np.zeros((dim, dim))
    for i in range(dim):
        bits = [(i >> (n - 1 - k)) & 1 for k in range(n)]
        j = sum(bits[perm[k]] << (n - 1 - k) for k in range(n))
        P[j, i] = 1.0
    return P


def _symmetric_state(n, n_max, support, rng):
    """Random density matrix invariant under atom permutations, photons on
    levels below ``support``."""
    ds = 2 ** n
    nph = n_max + 1
    x = np.zeros((ds, nph, ds * nph), complex)
    x[:, :support] = (rng.normal(size=(ds, support, ds * nph))
                      + 1j * rng.normal(size=(ds, support, ds * nph)))
    x = x.reshape(ds * nph, ds * nph)
    rho = x @ x.conj().T
    sym = np.zeros_like(rho)
    for perm in itertools.permutations(range(n)):
        P = np.kron(_site_permutation(n, perm), np.eye(nph))
        sym += P @ rho @ P.T
    return sym / np.trace(sym).real


def _moment_vector(rho, ops):
    Sz = ops.lift(0.5 * sum(ops.sigma_z)).toarray()
    Sp = ops.lift(sum(ops.sigma_plus)).toarray()
    Sx = 0.5 * (Sp + Sp.T)
    Sy = -0.5j * (Sp - Sp.T)
    a = ops.a.toarray()
    ev = lambda op: np.trace(op @ rho)  # noqa: E731
    am, aa, asx, asy, sxsy = ev(a), ev(a @ a), ev(a @ Sx), ev(a @ Sy), ev(Sx @ Sy)
    return np.array([am.real, am.imag, ev(Sx).real, ev(Sy).real, ev(Sz).real,
                     ev(a.conj().T @ a).real, aa.real, aa.imag, asx.real, asx.imag,
                     asy.real, asy.imag, ev(Sx @ Sx).real, ev(Sy @ Sy).real,
                     ev(Sz @ Sz).real, sxsy.real, sxsy.imag])


def _exact_derivative(params, pert, rho, n_max):
    L = oracle.build_liouvillian(params, pert, n_max)
    d = L.dim
    drho = (L.matrix @ rho.T.ravel()).reshape(d, d).T
    return _moment_vector(drho, L.ops), L.ops


@pytest.mark.parametrize("f", [0.0, 0.35, 1.0])
def test_uncoupled_equations_are_exact(f, rng):
    # at g = 0 nothing needs closing, so every MF2 component must be exact
    p = ModelParams(n_atoms=3, g=0.0)
    pert = PerturbationSpec(0.7, f)
    n_max = 5
    rho = _symmetric_state(3, n_max, 3, rng)
    exact, ops = _exact_derivative(p, pert, rho, n_max)
    y = _moment_vector(rho, ops)
    assert np.allclose(mf2_rhs_vec(y, p, pert), exact, atol=1e-10)


@pytest.mark.parametrize("f", [0.0, 1.0])
def test_closed_components_exact_with_coupling(f, rng):
    p = ModelParams(n_atoms=3, g=0.9)
    pert = PerturbationSpec(0.4, f)
    n_max = 6
    rho = _symmetric_state(3, n_max, 3, rng)
    exact, ops = _exact_derivative(p, pert, rho, n_max)
    y = _moment_vector(rho, ops)
    closed = [0, 1, 2, 4, 5, 6, 7, 8, 9, 12]
    assert np.allclose(mf2_rhs_vec(y, p, pert)[closed], exact[closed], atol=1e-10)


def test_imaginary_sxsy_convention(rng):
    ops = oracle.full_space_operators(3, 2)
    y = _moment_vector(_symmetric_state(3, 2, 2, rng), ops)
    assert y[16] == pytest.approx(y[4] / 2, abs=1e-12)


# ----------------------------------------------------- algebraic checks ----

def _random_mf2(rng, n):
    y = rng.normal(size=MF2_DIM) * n / 4
    y[16] = y[4] / 2
    return y


def test_factorized_mf2_reduces_to_mf1(rng):
    p = ModelParams(n_atoms=50)
    pert = PerturbationSpec(0.3, 0.6)
    for _ in range(20):
        a = complex(*rng.normal(size=2))
        sx, sy, sz = rng.normal(size=3) * 5
        st = MF2State(a, sx, sy, sz, abs(a) ** 2, a * a, a * sx, a * sy, sx * sx, sy * sy,
                      sz * sz, sx * sy + 0.5j * sz, 50)
        lhs = mf2_rhs_vec(st.to_vector(), p, pert)[:5]
        rhs = mf1_rhs_vec(MF1State(a, sx, sy, sz, 50).to_vector(), p, pert)
        assert np.allclose(lhs, rhs, atol=1e-12, rtol=1e-12)


def test_gamma_enters_linearly(rng):
    p = ModelParams(n_atoms=20)
    y = _random_mf2(rng, 20)
    base = mf2_rhs_vec(y, p, PerturbationSpec(0.0, 0.3))
    one = mf2_rhs_vec(y, p, PerturbationSpec(1e-2, 0.3)) - base
    two = mf2_rhs_vec(y, p, PerturbationSpec(2e-2, 0.3)) - base
    assert np.allclose(two, 2 * one, atol=1e-13)


def test_batched_rhs_matches_columns(rng):
    p = ModelParams(n_atoms=10)
    Y = np.stack([_random_mf2(rng, 10) for _ in range(4)], axis=1)
    out = mf2_rhs_vec(Y, p)
    for b in range(4):
        assert np.allclose(out[:, b], mf2_rhs_vec(Y[:, b], p))


def test_normal_fixed_point_mf1():
    p = ModelParams(n_atoms=10)
    y = np.array([0, 0, 0, 0, -5.0])
    for f in (0.0, 0.5, 1.0):
        assert np.allclose(mf1_rhs_vec(y, p, PerturbationSpec(0.1, f)), 0)


def test_empty_spin_relaxes_only_transverse_fluctuations():
    # zero spin moments, vacuum, pure dephasing: only <Sx^2>, <Sy^2> move
    p = ModelParams(n_atoms=8)
    pert = PerturbationSpec(0.2, 1.0)
    d = mf2_rhs_vec(np.zeros(MF2_DIM), p, pert)
    moving = np.flatnonzero(np.abs(d) > 0)
    assert list(moving) == [12, 13]
    assert d[12] == pytest.approx(pert.gamma_tilde * 8 / 2)


def test_empty_cavity_decay():
    p = ModelParams(n_atoms=4, g=0.0)
    y = np.zeros(MF2_DIM)
    y[5] = 3.0
    assert mf2_rhs_vec(y, p)[5] == pytest.approx(-p.kappa * 3.0)


def test_free_precession():
    p = ModelParams(n_atoms=10, g=0.0)
    y0 = np.array([0.0, 0.0, 3.0, 0.0, -4.0])
    from scipy.integrate import solve_ivp
    t = 1.3
    sol = solve_ivp(lambda _t, y: mf1_rhs_vec(y, p), (0, t), y0, rtol=1e-12, atol=1e-12)
    sx, sy = sol.y[2, -1], sol.y[3, -1]
    w = 2 * p.omega_0
    assert (sx, sy) == pytest.approx((3 * math.cos(w * t), 3 * math.sin(w * t)), abs=1e-9)


def test_initial_states():
    st = init_dicke_state(SpinSubspace(2, 6))
    assert (st.sz2, st.sx2, st.sy2) == (1.0, 0.5, 0.5)
    assert st.sxsy == -0.5j
    for two_s in (1, 3, 7):
        sub = SpinSubspace(two_s, 7)
        assert total_spin_from_moments(init_dicke_state(sub)) == pytest.approx(sub.s_tilde)
    m1 = init_mf1_state(SpinSubspace(6, 6), ModelParams(n_atoms=6))
    assert m1.spin_length == pytest.approx(3.0)
    assert m1.sx == pytest.approx(3e-3)


# ---------------------------------------------------------- integration ----

def test_casimir_conserved_without_perturbation():
    p = ModelParams(n_atoms=10)
    sub = SpinSubspace(8, 10)
    run = integrate_to_steady(mf2_rhs_vec, init_dicke_state(sub).to_vector(), p, t_max=400,
                              raise_on_failure=False, polish=False)
    st = MF2State.from_vector(run.y, 10)
    assert st.casimir == pytest.approx(sub.s * (sub.s + 1), rel=1e-6)


def test_mf1_photons_vanish_below_threshold():
    p = ModelParams(n_atoms=1000)
    n = mf1_photons_at(p, [0.2, 0.6, 1.0]) / p.n_atoms
    assert n[0] < 1e-8
    assert 0 < n[1] < n[2]


def test_mf2_approaches_mf1_at_large_n():
    p = ModelParams(n_atoms=10_000)
    s_tilde = [0.2, 0.6, 1.0]
    subs = [SpinSubspace(round(s * p.n_atoms), p.n_atoms) for s in s_tilde]
    n2 = np.array([m.photon_mean for m in mf2_subspace_moments(p, subs)]) / p.n_atoms
    n1 = mf1_photons_at(p, s_tilde) / p.n_atoms
    # normal branch: both per-atom photon numbers are ~0
    assert n1[0] < 1e-8 and n2[0] < 1e-2 * n1[1]
    assert np.allclose(n2[1:], n1[1:], rtol=1e-2)


# ----------------------------------------------- density-matrix arbiter ----

def _top_sector_errors(n):
    p = ModelParams(n_atoms=n)
    sub = SpinSubspace(n, n)
    dm = steady_state(p, sub).moments
    mf = mf2_subspace_moments(p, [sub])[0]
    return (abs(mf.sz_mean - dm.sz_mean) / abs(dm.sz_mean),
            abs(mf.sz2_mean - dm.sz2_mean) / abs(dm.sz2_mean))


def test_mf2_matches_dm_at_four_atoms():
    # tolerance as specified; second-order closure misses it at N=4 (see README)
    err_sz, err_sz2 = _top_sector_errors(4)
    assert err_sz <= 0.02
    assert err_sz2 <= 0.02


def test_mf2_closure_error_shrinks_like_one_over_n():
    errs = {n: _top_sector_errors(n)[0] for n in (4, 8, 12)}
    assert errs[4] > errs[8] > errs[12]
    # N * error roughly constant: the drive coefficient carries no O(1) defect
    scaled = [n * e for n, e in errs.items()]
    assert max(scaled) / min(scaled) < 1.5
