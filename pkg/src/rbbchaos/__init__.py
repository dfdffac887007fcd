"""Simulation and exact verification for the Repeated Balls-into-Bins process,
its mean-field nonlinear limit and the M/D/1 queue."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
from .pmf import Pmf, TruncationError, tv_distance  # noqa: E402
from .processes import (  # noqa: E402
    BinConfiguration,
    CoupledPath,
    OccupancyProfile,
    coupled_step,
    coupled_trajectory,
    md1_step,
    nonlinear_step,
    rbb_step,
    simulate_rbb,
)
from .rng import RandomStream  # noqa: E402

__all__ = [
    "BACKEND",
    "BinConfiguration",
    "CoupledPath",
    "OccupancyProfile",
    "Pmf",
    "RandomStream",
    "TruncationError",
    "coupled_step",
    "coupled_trajectory",
    "md1_step",
    "nonlinear_step",
    "rbb_step",
    "simulate_rbb",
    "tv_distance",
]
