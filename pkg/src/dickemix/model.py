"""Parameter records, total-spin bookkeeping and the generalized critical curve.

All rates are measured in units of the cavity loss rate; ``kappa`` defaults
to 1 but stays a field so every formula keeps its general form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional


@dataclass(frozen=True)
class ModelParams:
    omega_c: float = 1.0
    omega_0: float = 0.5
    g: float = 0.9
    kappa: float = 1.0
    n_atoms: int = 4

    def __post_init__(self):
        if not self.omega_c > 0:
            raise ValueError(f"omega_c must be positive, got {self.omega_c}")
        if not self.omega_0 > 0:
            raise ValueError(f"omega_0 must be positive, got {self.omega_0}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.g >= 0:
            raise ValueError(f"g must be non-negative, got {self.g}")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms}")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))

    @property
    def g_prime(self) -> float:
        """Per-atom coupling g/sqrt(N)."""
        return self.g / math.sqrt(self.n_atoms)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {"omega_c": self.omega_c, "omega_0": self.omega_0, "g": self.g,
                "kappa": self.kappa, "n_atoms": self.n_atoms}


@dataclass(frozen=True)
class PerturbationSpec:
    """Overall strength ``gamma`` split into dephasing ``f*gamma`` and local
    decay ``(1-f)*gamma``."""

    gamma: float = 0.0
    f: float = 1.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if not 0.0 <= self.f <= 1.0:
            raise ValueError(f"f must lie in [0, 1], got {self.f}")

    @property
    def gamma_phi(self) -> float:
        return self.f * self.gamma

    @property
    def gamma_down(self) -> float:
        return (1.0 - self.f) * self.gamma

    @property
    def gamma_tilde(self) -> float:
        return 0.5 * (self.gamma_phi + self.gamma_down)


NO_PERTURBATION = PerturbationSpec(0.0, 1.0)


@dataclass(frozen=True, order=True)
class SpinSubspace:
    """Fixed total spin sector, stored as the integer ``two_s`` = 2S."""

    two_s: int
    n_atoms: int

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.two_s < 0 or self.two_s > self.n_atoms:
            raise ValueError(f"2S={self.two_s} outside [0, N={self.n_atoms}]")
        if (self.two_s - self.n_atoms) % 2:
            raise ValueError(f"2S={self.two_s} has the wrong parity for N={self.n_atoms}")

    @property
    def s(self) -> float:
        return self.two_s / 2

    @property
    def s_exact(self) -> Fraction:
        return Fraction(self.two_s, 2)

    @property
    def dim(self) -> int:
        return self.two_s + 1

    @property
    def s_tilde(self) -> float:
        return self.two_s / self.n_atoms

    @property
    def m_values(self):
        """Spin projections -S, ..., S in increasing order."""
        return [(k - self.two_s) / 2 for k in range(0, 2 * self.two_s + 1, 2)]

    def __str__(self):
        return f"S={self.s_exact} (N={self.n_atoms})"


def s_min_two(n_atoms: int) -> int:
    return n_atoms % 2


def enumerate_subspaces(n_atoms: int) -> list[SpinSubspace]:
    """All total-spin sectors S_min, S_min+1, ..., N/2 in increasing order."""
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise ValueError(f"n_atoms must be a positive integer, got {n_atoms}")
    n_atoms = int(n_atoms)
    return [SpinSubspace(t, n_atoms) for t in range(n_atoms % 2, n_atoms + 1, 2)]


def n_subspaces(n_atoms: int) -> int:
    return n_atoms // 2 + 1


def degeneracy(sub: SpinSubspace) -> int:
    """Multiplicity D_S of the spin-S representation inside N spin-1/2's.

    Exact integer arithmetic, valid for any N.
    """
    n = sub.n_atoms
    up = (n + sub.two_s) // 2          # N/2 + S
    down = (n - sub.two_s) // 2        # N/2 - S
    num = (sub.two_s + 1) * math.factorial(n)
    den = math.factorial(up + 1) * math.factorial(down)
    d, rem = divmod(num, den)
    assert rem == 0
    return d


def _critical_product(omega_c: float, omega_0: float, kappa: float) -> float:
    # (g^2 S~) on the critical curve
    return omega_0 * (omega_c ** 2 + kappa ** 2 / 4) / (2 * omega_c)


def critical_spin_value(params: ModelParams) -> float:
    """Normalized critical spin without the S~ <= 1 cut."""
    if params.g == 0:
        raise ValueError("critical spin undefined at g = 0")
    return _critical_product(params.omega_c, params.omega_0, params.kappa) / params.g ** 2


def critical_spin(params: ModelParams) -> Optional[float]:
    """Normalized spin above which a sector is superradiant, or None when
    even the fully symmetric sector stays normal."""
    s_c = critical_spin_value(params)
    return None if s_c > 1 else s_c


def critical_coupling(s_tilde: float, omega_c: float = 1.0, omega_0: float = 0.5,
                      kappa: float = 1.0) -> float:
    if not s_tilde > 0:
        raise ValueError(f"s_tilde must be positive, got {s_tilde}")
    return math.sqrt(_critical_product(omega_c, omega_0, kappa) / s_tilde)


def critical_coupling_for(params: ModelParams, s_tilde: float) -> float:
    return critical_coupling(s_tilde, params.omega_c, params.omega_0, params.kappa)
