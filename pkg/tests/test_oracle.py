import numpy as np
import pytest
import scipy.linalg as la

from dickemix import dpt, oracle
from dickemix.errors import DimensionCapError
from dickemix.model import ModelParams, PerturbationSpec
from dickemix.sweeps import subspace_moments


def _spectrum(L):
    return la.eigvals(L.matrix.toarray())


def test_trace_preserving():
    L = oracle.build_liouvillian(ModelParams(n_atoms=2), PerturbationSpec(0.3, 0.4), n_max=4)
    assert np.abs(L.trace_row() @ L.matrix).max() < 1e-12


def test_single_atom_dephasing_rate():
    # coherence |1,0><0,0| decays at gamma_phi/2 and rotates at 2 omega_0
    p = ModelParams(n_atoms=1, g=0.0)
    pert = PerturbationSpec(0.2, 1.0)
    w = _spectrum(oracle.build_liouvillian(p, pert, n_max=2))
    target = -pert.gamma_phi / 2 - 2j * p.omega_0
    assert np.min(np.abs(w - target)) < 1e-12


def test_single_atom_decay_rate():
    p = ModelParams(n_atoms=1, g=0.0)
    pert = PerturbationSpec(0.2, 0.0)
    w = _spectrum(oracle.build_liouvillian(p, pert, n_max=2))
    assert np.min(np.abs(w + pert.gamma_down)) < 1e-12


def test_uncoupled_cavity_ladder():
    p = ModelParams(n_atoms=1, g=0.0)
    nm = 3
    w = _spectrum(oracle.build_liouvillian(p, PerturbationSpec(), n_max=nm))
    expected = [-p.kappa * (n + m) / 2 - 1j * p.omega_c * (n - m)
                for n in range(nm + 1) for m in range(nm + 1)]
    for z in expected:
        assert np.min(np.abs(w - z)) < 1e-10


def test_invariant_basis_is_orthonormal_and_invariant():
    L = oracle.build_liouvillian(ModelParams(n_atoms=3), PerturbationSpec(0.1, 0.5), n_max=3)
    B = L.basis
    gram = (B.T @ B).toarray()
    assert np.allclose(gram, np.eye(gram.shape[0]))
    # L maps the invariant sector into itself: the projection loses nothing
    x = np.random.default_rng(1).normal(size=B.shape[1])
    y = L.matrix @ (B @ x)
    assert np.linalg.norm(y - B @ (B.T @ y)) < 1e-10 * np.linalg.norm(y)


def test_singlet_population():
    ops = oracle.full_space_operators(2, 1)
    singlet = np.zeros(4)
    singlet[[1, 2]] = [1 / np.sqrt(2), -1 / np.sqrt(2)]
    psi = np.kron(singlet, [1.0, 0.0])
    dist = oracle.spin_resolved_population(np.outer(psi, psi), ops)
    assert dist.p == pytest.approx([1.0, 0.0])


@pytest.fixture(scope="module")
def two_atoms():
    p = ModelParams(n_atoms=2)
    return p, subspace_moments(p, "dm")


@pytest.mark.parametrize("f", [0.0, 0.5, 1.0])
def test_two_atom_distribution_matches_dpt(two_atoms, f):
    p, moms = two_atoms
    pert = PerturbationSpec(1e-4, f)
    L = oracle.build_liouvillian(p, pert)
    rho, res = oracle.steady_state_full(L)
    assert res < 1e-9
    assert oracle.permutation_defect(rho, L.ops) < 1e-10
    exact = oracle.spin_resolved_population(rho, L.ops).p
    approx = dpt.null_distribution(dpt.coupling_matrix(moms, 2, pert)).p
    assert np.allclose(exact, approx, rtol=2e-3, atol=1e-4)


def test_two_atom_slow_rate_slope(two_atoms):
    p, moms = two_atoms
    gam = 1e-5
    w = oracle.slow_cluster(oracle.build_liouvillian(p, PerturbationSpec(gam, 1.0)), 2)
    lam = dpt.slow_spectrum(dpt.coupling_matrix(moms, 2, PerturbationSpec(gam, 1.0)), k=2)
    assert abs(w.eigenvalues[0]) < 1e-10
    assert w.eigenvalues[1].real == pytest.approx(lam.eigenvalues[1].real, rel=1e-3)


def test_unique_steady_state_under_perturbation(two_atoms):
    p, _ = two_atoms
    L = oracle.build_liouvillian(p, PerturbationSpec(1e-3, 0.5))
    assert oracle.check_unique_steady_state(L) == 1


def test_cutoff_convergence(two_atoms):
    p, _ = two_atoms
    pert = PerturbationSpec(1e-4, 0.5)
    base = oracle.oracle_cutoff(p)
    a = oracle.spin_resolved_population(*_ss(oracle.build_liouvillian(p, pert, base)))
    b = oracle.spin_resolved_population(*_ss(oracle.build_liouvillian(p, pert, base + 6)))
    assert np.allclose(a.p, b.p, atol=1e-6)


def _ss(L):
    return oracle.steady_state_full(L)[0], L.ops


def test_size_caps():
    with pytest.raises(DimensionCapError):
        oracle.build_liouvillian(ModelParams(n_atoms=5), PerturbationSpec())
    with pytest.raises(DimensionCapError):
        oracle.full_space_operators(4, 200)
