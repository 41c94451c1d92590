import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dickemix.errors import MultimodalError
from dickemix.fitting import fit_gaussian, fit_power_law, gaussian, is_unimodal


def test_power_law_exact_half():
    n = np.arange(100, 2001, 100)
    fit = fit_power_law(n, 0.7 / np.sqrt(n))
    assert fit.exponent == pytest.approx(-0.5, abs=1e-12)
    assert fit.prefactor == pytest.approx(0.7, rel=1e-10)
    assert np.abs(fit.residuals).max() < 1e-12


def test_power_law_constant():
    assert fit_power_law([10, 20, 40], [3.0, 3.0, 3.0]).exponent == pytest.approx(0.0, abs=1e-12)


def test_power_law_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_power_law([1, 2], [1, 1])
    with pytest.raises(ValueError):
        fit_power_law([1, 2, 3], [1, 0, 1])


@settings(max_examples=40, deadline=None)
@given(center=st.floats(0.3, 0.7), sigma=st.floats(0.02, 0.1), amp=st.floats(0.1, 10.0))
def test_gaussian_recovered(center, sigma, amp):
    x = np.linspace(0, 1, 201)
    fit = fit_gaussian(x, gaussian(x, amp, center, sigma))
    assert fit.center == pytest.approx(center, abs=1e-8)
    assert fit.sigma == pytest.approx(sigma, rel=1e-6)
    assert fit.amplitude == pytest.approx(amp, rel=1e-6)


def test_bimodal_rejected_with_moments():
    x = np.linspace(0, 1, 101)
    y = gaussian(x, 1, 0.25, 0.05) + gaussian(x, 1, 0.75, 0.05)
    assert not is_unimodal(y)
    with pytest.raises(MultimodalError) as err:
        fit_gaussian(x, y)
    assert err.value.details["moment_center"] == pytest.approx(0.5, abs=1e-6)


def test_too_narrow_rejected():
    x = np.linspace(0, 1, 11)
    y = np.zeros(11)
    y[5] = 1.0
    with pytest.raises(MultimodalError):
        fit_gaussian(x, y)
