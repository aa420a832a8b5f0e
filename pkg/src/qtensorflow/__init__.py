"""Q-tensor nematic liquid crystals coupled to incompressible flow: solver and diagnostics."""
from .algebra import biaxial, contract, potential_F, uniaxial
from .dynamics import EnergyLedger, SimState, StepperConfig, run
from .energy import PotentialParams, compute_mu
from .equilibrium import EquilibriumReport, lojasiewicz_fit, omega_limit_check
from .grid import Grid, make_grid

__version__ = "0.1.0"

__all__ = [
    "biaxial",
    "contract",
    "potential_F",
    "uniaxial",
    "EnergyLedger",
    "SimState",
    "StepperConfig",
    "run",
    "PotentialParams",
    "compute_mu",
    "EquilibriumReport",
    "lojasiewicz_fit",
    "omega_limit_check",
    "Grid",
    "make_grid",
]
