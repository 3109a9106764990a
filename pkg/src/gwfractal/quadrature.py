"""Midpoint rules shared by the integrators.

Offset rules put one node in each of ``M`` equal cells of the interval,
displaced from the cell centre by a tiny irrational fraction of the step.
The shift keeps nodes off the L-adic lattice, where lines through grid
corners make the integrands ambiguous, while an indicator of the whole
interval is still integrated exactly.
Angle rules are plain midpoint rules on ``[0, pi]``; their nodes are
irrational multiples of ``pi`` and so never hit a lattice direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

NODE_SHIFT = (math.sqrt(5.0) - 1.0) / 2.0 * 1e-3


@dataclass(frozen=True)
class QuadratureRule:
    nodes: int = 256

    def __post_init__(self):
        if not isinstance(self.nodes, (int, np.integer)) or self.nodes < 1:
            raise ParameterError(f"quadrature needs a positive node count, got {self.nodes!r}")

    def refined(self) -> "QuadratureRule":
        return QuadratureRule(2 * self.nodes)

    def offsets(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Shifted midpoint nodes and weights on ``[a, b]``."""
        h = (b - a) / self.nodes
        x = a + (np.arange(self.nodes) + 0.5 + NODE_SHIFT) * h
        return x, np.full(self.nodes, h)

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        h = math.pi / self.nodes
        return (np.arange(self.nodes) + 0.5) * h, np.full(self.nodes, h)


def angle_sincos(thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s, c = np.sin(thetas), np.cos(thetas)
    s[np.abs(s) < 1e-15] = 0.0
    c[np.abs(c) < 1e-15] = 0.0
    return s, c
