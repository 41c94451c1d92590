"""Gaussian profile and power-law fits for spin distributions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import MultimodalError


@dataclass
class GaussianFit:
    amplitude: float
    center: float
    sigma: float
    residual_rms: float
    moment_center: float
    moment_sigma: float

    def __call__(self, x):
        return gaussian(np.asarray(x, float), self.amplitude, self.center, self.sigma)

    def as_dict(self):
        return dict(amplitude=self.amplitude, center=self.center, sigma=self.sigma,
                    residual_rms=self.residual_rms, moment_center=self.moment_center,
                    moment_sigma=self.moment_sigma)


@dataclass
class PowerLawFit:
    exponent: float
    prefactor: float
    n_range: tuple
    residuals: np.ndarray

    def as_dict(self):
        return dict(beta=self.exponent, prefactor=self.prefactor,
                    n_min=self.n_range[0], n_max=self.n_range[1],
                    residuals=[float(r) for r in self.residuals])


def gaussian(x, amplitude, center, sigma):
    return amplitude / (sigma * np.sqrt(2 * np.pi)) * np.exp(-(x - center) ** 2 / (2 * sigma ** 2))


def is_unimodal(y, plateau_tol: float = 1e-9) -> bool:
    """At most one rise-to-fall turn of the discrete derivative.

    Steps smaller than ``plateau_tol`` times the peak height are treated as
    flat so numerically zero tails do not count as extra modes.
    """
    y = np.asarray(y, float)
    if y.size < 3:
        return True
    dy = np.diff(y)
    dy[np.abs(dy) <= plateau_tol * np.abs(y).max()] = 0.0
    s = np.sign(dy[dy != 0])
    return int(np.count_nonzero(s[1:] != s[:-1])) <= 1


def fit_gaussian(x, y, plateau_tol: float = 1e-9) -> GaussianFit:
    """Least-squares Gaussian through (x, y), seeded by the sample moments.

    Raises MultimodalError for several peaks or a width below the grid step,
    reporting the raw moments instead.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    mass = np.trapezoid(y, x) if x.size > 1 else float(y.sum())
    w = y / y.sum()
    mu = float(np.sum(w * x))
    sd = float(np.sqrt(max(np.sum(w * (x - mu) ** 2), 0.0)))
    step = float(np.min(np.diff(x))) if x.size > 1 else 0.0
    if not is_unimodal(y, plateau_tol):
        raise MultimodalError("distribution has more than one peak",
                              moment_center=mu, moment_sigma=sd)
    if sd < step or x.size < 4:
        raise MultimodalError("width below grid spacing; Gaussian fit is degenerate",
                              moment_center=mu, moment_sigma=sd)
    popt, _ = curve_fit(gaussian, x, y, p0=(mass, mu, sd), method="lm", maxfev=20000,
                        xtol=1e-15, ftol=1e-15)
    amp, cen, sig = popt
    sig = abs(sig)
    resid = y - gaussian(x, amp, cen, sig)
    return GaussianFit(float(amp), float(cen), float(sig), float(np.sqrt(np.mean(resid ** 2))),
                       mu, sd)


def fit_distribution(dist) -> GaussianFit:
    """Gaussian over S~ of the sector-count-scaled weights."""
    return fit_gaussian(dist.s_tilde, dist.p_scaled)


def fit_power_law(n_values, sigmas) -> PowerLawFit:
    """beta from ordinary least squares of log sigma against log N."""
    n = np.asarray(n_values, float)
    s = np.asarray(sigmas, float)
    if n.size < 3:
        raise ValueError("power-law fit needs at least 3 points")
    if np.any(s <= 0) or np.any(n <= 0):
        raise ValueError("power-law fit needs positive N and sigma")
    beta, logc = np.polyfit(np.log(n), np.log(s), 1)
    resid = np.log(s) - (beta * np.log(n) + logc)
    return PowerLawFit(float(beta), float(np.exp(logc)), (float(n.min()), float(n.max())), resid)
