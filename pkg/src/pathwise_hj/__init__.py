"""Pathwise viscosity solutions of stochastic Hamilton-Jacobi equations on periodic 1-D grids.

Submodules
----------
paths
    Driving signals, partitions, regularizations and CFL checks.
problems
    Hamiltonians, diffusions and initial data.
schemes
    Monotone scheme operators and the time-marching loop.
oracles
    Exact Hopf-Lax compositions, characteristics and fine-grid references.
harness
    Rate, bound, stopping-time and distribution studies.
cli
    Command-line runner.
"""

__version__ = "0.1.0"

from .kernels import BACKEND
from .paths import CFLError, Partition, PiecewisePath, StoppingTimeFamily, osc, sample_brownian
from .problems import Diffusion, Hamiltonian, InitialData, Problem, builtin_problems, get_problem
from .schemes import Grid1D, GridFunction, SchemeSpec, evolve

__all__ = [
    "BACKEND",
    "CFLError",
    "Diffusion",
    "Grid1D",
    "GridFunction",
    "Hamiltonian",
    "InitialData",
    "Partition",
    "PiecewisePath",
    "Problem",
    "SchemeSpec",
    "StoppingTimeFamily",
    "builtin_problems",
    "evolve",
    "get_problem",
    "osc",
    "sample_brownian",
]
