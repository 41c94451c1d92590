import math

import pytest

from dickemix.errors import DickeError
from dickemix.model import (ModelParams, PerturbationSpec, SpinSubspace, critical_coupling,
                            critical_coupling_for, critical_spin, critical_spin_value,
                            degeneracy, enumerate_subspaces, n_subspaces)


def test_critical_values_default_cavity():
    assert critical_coupling(1.0) == pytest.approx(math.sqrt(0.3125), abs=1e-15)
    assert critical_spin_value(ModelParams(g=0.9)) == pytest.approx(0.3125 / 0.81, abs=1e-15)


def test_critical_curve_roundtrip():
    p = ModelParams(g=1.3, kappa=0.4, omega_0=0.7)
    s = critical_spin_value(p)
    assert critical_coupling_for(p, s) == pytest.approx(p.g, rel=1e-14)


def test_critical_spin_none_when_out_of_range():
    assert critical_spin(ModelParams(g=0.3)) is None
    assert critical_spin(ModelParams(g=0.9)) == pytest.approx(0.385802, abs=1e-6)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 40, 41])
def test_sector_enumeration(n):
    subs = enumerate_subspaces(n)
    assert len(subs) == n_subspaces(n) == n // 2 + 1
    assert subs[-1].two_s == n
    assert subs[0].two_s == n % 2
    # sum of d_S (2S+1) over sectors recovers 2^N
    assert sum(degeneracy(s) * s.dim for s in subs) == 2 ** n


def test_degeneracy_small():
    assert [degeneracy(s) for s in enumerate_subspaces(4)] == [2, 3, 1]


def test_s_tilde_and_m_values():
    sub = SpinSubspace(3, 5)
    assert sub.s == 1.5 and sub.dim == 4
    assert sub.s_tilde == pytest.approx(0.6)
    assert list(sub.m_values) == [-1.5, -0.5, 0.5, 1.5]


@pytest.mark.parametrize("kwargs", [dict(two_s=5, n_atoms=4), dict(two_s=2, n_atoms=3),
                                    dict(two_s=-2, n_atoms=4)])
def test_bad_subspace(kwargs):
    with pytest.raises((DickeError, ValueError)):
        SpinSubspace(**kwargs)


def test_perturbation_rates():
    p = PerturbationSpec(gamma=2e-4, f=0.25)
    assert p.gamma_phi == pytest.approx(0.5e-4)
    assert p.gamma_down == pytest.approx(1.5e-4)
    with pytest.raises((DickeError, ValueError)):
        PerturbationSpec(gamma=1.0, f=1.5)


def test_params_validation_and_copy():
    with pytest.raises((DickeError, ValueError)):
        ModelParams(n_atoms=0)
    p = ModelParams().with_(g=0.2)
    assert p.g == 0.2 and p.g_prime == pytest.approx(0.2 / math.sqrt(p.n_atoms))
