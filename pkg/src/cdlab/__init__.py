"""Large-time asymptotics of convection-diffusion equations with variable diffusion."""
from .analysis import AsymptoticExpansion, TolerancePolicy, fit_rate, residual_series
from .config import load_config
from .functionals import ConstantSet, Ledger, finalize_constants
from .grid_field import Field, Grid, lp_norm
from .model import DiffusionPerturbation, Dipole, Gaussian, InitialData, ModelSpec
from .solver import DiffusionSolver, RunRecord, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "AsymptoticExpansion",
    "ConstantSet",
    "DiffusionPerturbation",
    "DiffusionSolver",
    "Dipole",
    "Field",
    "Gaussian",
    "Grid",
    "InitialData",
    "Ledger",
    "ModelSpec",
    "RunRecord",
    "SolverConfig",
    "TolerancePolicy",
    "finalize_constants",
    "fit_rate",
    "load_config",
    "lp_norm",
    "residual_series",
    "solve",
]
