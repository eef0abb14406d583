"""Transient response densities of two-dimensional systems driven by fractional Gaussian noise.

Pipeline: simulate sample paths with their Malliavin derivatives
(:mod:`memfpk.simulate`), estimate the memory-dependent diffusion
coefficients (:mod:`memfpk.dlmm`), solve the resulting Fokker-Planck-type
equation (:mod:`memfpk.solver`) and analyze the densities
(:mod:`memfpk.stats`). :mod:`memfpk.linear` holds the exact results for the
linear oscillator used as a reference throughout.
"""
from .dlmm import BinGrid, CoefficientField, DlmmCoefficients, estimate
from .fgn import FgnIncrements, FgnSpec, increment_autocovariance, sample_path
from .grid import GridGeometry, PdfGrid, SolverGrid
from .linear import LinearParams, analytic_pdf, gaussian_summary, linear_memfpk_coeffs
from .models import BUILTIN_NAMES, GaussianInit, SystemModel, builtin, verify_jacobian
from .simulate import EnsembleResult, SimGrid, integrate_path, malliavin_diagonal, run_ensemble
from .solver import GwnCoefficients, LinearCoefficients, SolverOptions, solve
from .stats import compare, histogram2d, marginals, moments

__all__ = [
    "BUILTIN_NAMES", "BinGrid", "CoefficientField", "DlmmCoefficients", "EnsembleResult",
    "FgnIncrements", "FgnSpec", "GaussianInit", "GridGeometry", "GwnCoefficients",
    "LinearCoefficients", "LinearParams", "PdfGrid", "SimGrid", "SolverGrid", "SolverOptions",
    "SystemModel", "analytic_pdf", "builtin", "compare", "estimate", "gaussian_summary",
    "histogram2d", "increment_autocovariance", "integrate_path", "linear_memfpk_coeffs",
    "malliavin_diagonal", "marginals", "moments", "run_ensemble", "sample_path", "solve",
    "verify_jacobian",
]
