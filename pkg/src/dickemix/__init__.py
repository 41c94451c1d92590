"""Spin-sector mixing in the perturbed open Dicke model."""
from .model import (ModelParams, PerturbationSpec, SpinSubspace, critical_coupling,
                    critical_spin, degeneracy, enumerate_subspaces)

__version__ = "0.1.0"

__all__ = ["ModelParams", "PerturbationSpec", "SpinSubspace", "critical_coupling",
           "critical_spin", "degeneracy", "enumerate_subspaces"]
