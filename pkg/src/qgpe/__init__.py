"""Pseudo-spectral toolkit for the rotating stratified Boussinesq system,
its quasi-geostrophic limit, and the epsilon-scaling experiments that
measure the convergence between the two."""

__version__ = "0.1.0"

from .grid import Grid, SpectralField4, forward_transform, inverse_transform, dealias
from .params import PhysParams

__all__ = [
    "Grid",
    "SpectralField4",
    "PhysParams",
    "forward_transform",
    "inverse_transform",
    "dealias",
    "__version__",
]
