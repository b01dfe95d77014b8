"""Vibrational stabilization of magnetic-moment orientations: simulation and analysis."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    DimensionlessSpec,
    ModelVariant,
    ReducedParams,
    SpinState,
    big_omega,
    from_dimensionless,
)
from .integrate import IntegratorConfig, Trajectory, integrate  # noqa: E402
from .analysis import classify_equilibria, effective_potential, potential_curve  # noqa: E402

__all__ = [
    "DimensionlessSpec",
    "ModelVariant",
    "ReducedParams",
    "SpinState",
    "big_omega",
    "from_dimensionless",
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "classify_equilibria",
    "effective_potential",
    "potential_curve",
]
