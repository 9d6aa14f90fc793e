"""Galton-Watson branching processes: simulation, exact laws, couplings and certificates."""

from .offspring import (
    DEFAULT_CAP,
    OffspringLaw,
    Pmf,
    TailMassWarning,
    convolve,
    convolve_power,
    delta,
    geometric,
    mean,
    poisson,
    sample,
    thin,
    truncate,
    two_point,
    variance,
)
from .chain import ChainConfig, EnsembleStats, Trajectory, batch_simulate, simulate, step, tau_of
from .exact import (
    extinction_by,
    extinction_probability,
    law_at,
    phi,
    propagate,
    skeleton_law,
    sum_law,
)
from .analysis import Certificate

__version__ = "0.1.0"
