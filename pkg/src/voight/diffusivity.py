"""Edge-stopping diffusivities ``g(s)`` and the gradient-magnitude field."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, gradient_arrays

#: lower clamp so the implicit diffusion operator never loses a face
G_FLOOR = 1e-12


class DiffusivityKind(str, enum.Enum):
    RATIONAL_SQUARED = "rational2"
    EXPONENTIAL = "exp"
    RATIONAL = "rational"


@dataclass(frozen=True)
class DiffusivitySpec:
    kind: DiffusivityKind = DiffusivityKind.RATIONAL_SQUARED
    k: float = 5.0
    #: feed ``|grad w|^2`` instead of ``|grad w|`` (Perona-Malik style)
    squared_argument: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", DiffusivityKind(self.kind))
        if not self.k > 0:
            raise ValueError(f"diffusion parameter k must be positive, got {self.k}")


def g_eval(spec: DiffusivitySpec, s):
    """Evaluate the diffusivity at ``s >= 0`` (scalar or array).

    rational2:  1 / (1 + (s/k^2)^2)
    exp:        exp(-s/k^2)
    rational:   1 / (1 + s/k^2)

    Results are clamped below at ``G_FLOOR``.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise ValueError("diffusivity argument must be non-negative")
    if spec.squared_argument:
        s_arr = s_arr**2
    r = s_arr / spec.k**2
    if spec.kind is DiffusivityKind.RATIONAL_SQUARED:
        out = 1.0 / (1.0 + r * r)
    elif spec.kind is DiffusivityKind.EXPONENTIAL:
        out = np.exp(-r)
    else:
        out = 1.0 / (1.0 + r)
    out = np.maximum(out, G_FLOOR)
    return float(out) if np.ndim(out) == 0 else out


def gradient_magnitude_array(w: np.ndarray, dx: float = 1.0, dy: float = 1.0, periodic: bool = False) -> np.ndarray:
    wx, wy = gradient_arrays(w, dx, dy, periodic)
    return np.hypot(wx, wy)


def gradient_magnitude_field(omega: ScalarField) -> ScalarField:
    """``|grad omega|`` by central differences, one-sided on the outer ring."""
    g = omega.grid
    return ScalarField(g, gradient_magnitude_array(omega.values, g.dx, g.dy, g.periodic))


def diffusivity_field(spec: DiffusivitySpec, omega: ScalarField) -> ScalarField:
    return ScalarField(omega.grid, g_eval(spec, gradient_magnitude_field(omega).values))
