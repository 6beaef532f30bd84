"""Rayleigh-Benard convection with continuous data assimilation of coarse vorticity data."""

from .assimilation import InterpolantSpec, NudgeParams, TwinConfig, run_twin, run_twin_members
from .benard import PhysParams, SimulationBlowUp, State, conduction_state, random_perturbed_ic, step
from .elliptic import build_poisson
from .spectral import Grid, make_grid

__all__ = [
    "Grid", "make_grid", "build_poisson",
    "PhysParams", "State", "SimulationBlowUp", "conduction_state", "random_perturbed_ic", "step",
    "InterpolantSpec", "NudgeParams", "TwinConfig", "run_twin", "run_twin_members",
]
__version__ = "0.1.0"
