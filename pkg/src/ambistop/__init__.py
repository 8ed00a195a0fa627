"""Optimal stopping under drift ambiguity, and stopping with a single crash.

The value of a robust stopping problem for a one-dimensional diffusion is the
smallest majorant of the reward among multiples of merged harmonic functions
``h_c``; :mod:`ambistop.majorant` computes it, with ``h_c`` in closed form for
Brownian motion (:mod:`ambistop.bm_harmonic`) or from tabulated ODE solutions
(:mod:`ambistop.ode_harmonic`).  :mod:`ambistop.crash` solves the crash model
through a Dynkin game and :mod:`ambistop.oracle` provides lattice and Monte
Carlo references that use none of that machinery.
"""
from .errors import AmbistopError
from .model import (
    AmbiguityProblem,
    Coefficient,
    CrashProblem,
    DiffusionSpec,
    DriftSelector,
    RewardFunction,
    SolverSettings,
    ValueSolution,
    arithmetic_bm,
    constant_theta,
    custom_diffusion,
    geometric_bm,
    load_config,
    load_problem,
    merge_point,
    piecewise_theta,
)

__version__ = "0.1.0"

__all__ = [
    "AmbistopError",
    "AmbiguityProblem",
    "Coefficient",
    "CrashProblem",
    "DiffusionSpec",
    "DriftSelector",
    "RewardFunction",
    "SolverSettings",
    "ValueSolution",
    "arithmetic_bm",
    "constant_theta",
    "custom_diffusion",
    "geometric_bm",
    "load_config",
    "load_problem",
    "merge_point",
    "piecewise_theta",
]
