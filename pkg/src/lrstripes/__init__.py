"""Long-range Ising stripes: energies, droplet bounds and ground-state searches."""

from .model_core import ModelParams, critical_coupling, effective_1d_potential, kappa_p
from .spin_lattice import (AllMinus, AllPlus, BoxGeometry, ExplicitExterior, Periodic,
                           SpinConfiguration, total_energy)
from .stripe_analytics import StripeProfile, optimal_stripe, stripe_energy_per_site

__all__ = [
    "AllMinus", "AllPlus", "BoxGeometry", "ExplicitExterior", "ModelParams", "Periodic",
    "SpinConfiguration", "StripeProfile", "critical_coupling", "effective_1d_potential",
    "kappa_p", "optimal_stripe", "stripe_energy_per_site", "total_energy",
]
