import math

import numpy as np
import pytest
import scipy.sparse as sp

from dickemix.errors import DegenerateSteadyStateError, DimensionCapError, GridTruncationError
from dickemix.model import ModelParams, SpinSubspace
from dickemix.subspace import (SteadyStateOptions, build_hamiltonian, build_operators,
                               krylov_restart, lindblad_rhs, liouvillian, reduced_photon_matrix,
                               spin_matrices, steady_state, wigner_fock,
                               wigner_from_photon_matrix)


@pytest.mark.parametrize("two_s", [1, 2, 5])
def test_spin_algebra(two_s):
    ops = build_operators(two_s, 2)
    comm = (ops.sx @ ops.sy - ops.sy @ ops.sx).toarray()
    assert np.allclose(comm, 1j * ops.sz.toarray())
    s2 = (ops.sx @ ops.sx + ops.sy @ ops.sy + ops.sz @ ops.sz).toarray()
    assert np.allclose(s2, ops.s2.toarray())


def test_liouvillian_matches_rhs(rng):
    p = ModelParams(n_atoms=3)
    ops, H = build_hamiltonian(p, SpinSubspace(3, 3), 5)
    d = ops.dim
    L = liouvillian(H, [math.sqrt(p.kappa) * ops.a])
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = x @ x.conj().T
    lhs = (L @ rho.T.ravel()).reshape(d, d).T
    assert np.allclose(lhs, lindblad_rhs(rho, H, ops.a, p.kappa), atol=1e-11)
    # trace preservation: vec(1)^+ L = 0
    assert np.abs(np.eye(d).T.ravel() @ L).max() < 1e-12


def test_n4_reference_moments(dm_moments4):
    s1, s2 = dm_moments4[1], dm_moments4[2]
    assert (s1.sz_mean, s1.sz2_mean, s1.photon_mean) == pytest.approx(
        (-0.69399, 0.76488, 0.36039), abs=2e-5)
    assert (s2.sz_mean, s2.sz2_mean, s2.photon_mean) == pytest.approx(
        (-0.86452, 1.65648, 2.03561), abs=2e-5)
    for m in dm_moments4:
        assert m.in_cone()


def test_singlet_is_vacuum(dm_moments4):
    m = dm_moments4[0]
    assert m.two_s == 0 and m.sz_mean == 0 and m.photon_mean == 0


@pytest.mark.parametrize("method", ["direct", "integrate"])
def test_krylov_agrees_with_other_routes(method):
    p = ModelParams(n_atoms=3, g=1.1)
    sub = SpinSubspace(3, 3)
    ref = steady_state(p, sub, SteadyStateOptions(n_max=12)).moments
    other = steady_state(p, sub, SteadyStateOptions(method=method, n_max=12)).moments
    assert other.sz_mean == pytest.approx(ref.sz_mean, abs=1e-7)
    assert other.sz2_mean == pytest.approx(ref.sz2_mean, abs=1e-7)
    assert other.photon_mean == pytest.approx(ref.photon_mean, abs=1e-7)


def test_cutoff_ladder_converges():
    p = ModelParams(n_atoms=6, g=1.2)
    sub = SpinSubspace(6, 6)
    auto = steady_state(p, sub).moments
    big = steady_state(p, sub, SteadyStateOptions(n_max=auto.fock_cutoff_used + 10)).moments
    assert big.photon_mean == pytest.approx(auto.photon_mean, rel=1e-6)


def test_weak_coupling_rate_equation():
    # cavity-mediated up/down rates differ only by the Lorentzian detuning
    # factors, giving geometric populations p(M+1)/p(M) = r
    p = ModelParams(n_atoms=4, g=0.02)
    lor = lambda det: 1 / (det ** 2 + p.kappa ** 2 / 4)  # noqa: E731
    r = lor(p.omega_c + 2 * p.omega_0) / lor(p.omega_c - 2 * p.omega_0)
    k = np.arange(5)
    w = r ** k
    expected = -2 + np.sum(k * w) / np.sum(w)
    m = steady_state(p, SpinSubspace(4, 4)).moments
    assert m.sz_mean == pytest.approx(expected, abs=1e-3)
    assert m.photon_mean < 1e-3


def test_zero_coupling_rejected():
    with pytest.raises(DegenerateSteadyStateError):
        steady_state(ModelParams(n_atoms=2, g=0.0), SpinSubspace(2, 2))


def test_dimension_cap():
    with pytest.raises(DimensionCapError):
        build_operators(40, 200)
    with pytest.raises(DimensionCapError):
        krylov_restart(10 ** 5)


def test_wigner_vacuum_and_fock_one():
    x = np.linspace(-5, 5, 101)
    vac = np.zeros((3, 3))
    vac[0, 0] = 1
    w = wigner_fock(vac, x, x)
    assert w[50, 50] == pytest.approx(1 / np.pi)
    one = np.zeros((3, 3))
    one[1, 1] = 1
    w1 = wigner_fock(one, x, x)
    assert w1[50, 50] == pytest.approx(-1 / np.pi)


def test_wigner_coherent_state_center():
    alpha = 1.5 - 0.5j
    n = np.arange(30)
    from scipy.special import gammaln
    amp = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) + 1j * n * np.angle(alpha)
                 - 0.5 * gammaln(n + 1))
    rho = np.outer(amp, amp.conj())
    grid = wigner_from_photon_matrix(rho, extent=6, points=121)
    peaks = grid.local_maxima()
    assert len(peaks) == 1
    x0, p0, wmax = peaks[0]
    assert x0 == pytest.approx(math.sqrt(2) * alpha.real, abs=0.06)
    assert p0 == pytest.approx(math.sqrt(2) * alpha.imag, abs=0.06)
    assert wmax == pytest.approx(1 / np.pi, rel=1e-2)
    assert grid.integral == pytest.approx(1.0, abs=1e-6)


def test_wigner_truncation_flagged():
    rho = np.zeros((40, 40))
    rho[30, 30] = 1.0
    with pytest.raises(GridTruncationError):
        wigner_from_photon_matrix(rho, extent=3, points=61)


def test_reduced_photon_matrix_trace(dm_moments4):
    p = ModelParams(n_atoms=4)
    r = steady_state(p, SpinSubspace(2, 4))
    rp = reduced_photon_matrix(r.rho, 2, r.moments.fock_cutoff_used)
    assert np.trace(rp).real == pytest.approx(1.0)
    n = np.arange(rp.shape[0])
    assert np.sum(n * np.diag(rp).real) == pytest.approx(r.moments.photon_mean)
