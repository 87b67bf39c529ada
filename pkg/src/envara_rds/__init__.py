"""Reaction-diffusion laboratory for mass-action networks and their fast-slow reductions."""

__version__ = "0.1.0"

from .grid_ops import Grid, SpectralSplit, build_split, laplacian_neumann, project
from .models import ModelKind, ModelSpec, build_rhs
from .params import Params
from .reaction_net import ParseError, ReactionNetwork, parse_network
from .solver import SolverError, StepperConfig, SystemState, integrate

__all__ = [
    "Grid", "SpectralSplit", "build_split", "laplacian_neumann", "project",
    "ModelKind", "ModelSpec", "build_rhs", "Params",
    "ParseError", "ReactionNetwork", "parse_network",
    "SolverError", "StepperConfig", "SystemState", "integrate",
]
