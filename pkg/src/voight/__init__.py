"""Image inpainting with Navier-Stokes and Navier-Stokes-Voight vorticity transport."""
from .diffusivity import DiffusivityKind, DiffusivitySpec, g_eval
from .grid import Boundary, Grid2D, ScalarField, UpwindMode, VectorField, stability_constant
from .imageio import GrayImage, InitMode, MaskRegion, load_mask, read_pgm, region_from_mask, write_pgm
from .metrics import RunReport, Status, psnr, rmse
from .solver import SolverParams, run_to_steady, solve_poisson, step

__all__ = [
    "Boundary", "DiffusivityKind", "DiffusivitySpec", "GrayImage", "Grid2D", "InitMode", "MaskRegion",
    "RunReport", "ScalarField", "SolverParams", "Status", "UpwindMode", "VectorField", "g_eval",
    "load_mask", "psnr", "read_pgm", "region_from_mask", "rmse", "run_to_steady", "solve_poisson",
    "stability_constant", "step", "write_pgm",
]
__version__ = "0.1.0"
