"""Rectangular node grids and the density container shared by every stage."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridGeometry:
    """Uniform node grid on ``[y1_min, y1_max] x [y2_min, y2_max]``.

    Nodes include the domain edges; ``n1``/``n2`` count nodes, not cells.
    """

    y1_min: float
    y1_max: float
    y2_min: float
    y2_max: float
    n1: int
    n2: int

    def __post_init__(self):
        if not (self.y1_max > self.y1_min and self.y2_max > self.y2_min):
            raise ValueError("grid domain is degenerate")
        if self.n1 < 3 or self.n2 < 3:
            raise ValueError("grid needs at least 3 nodes per axis")

    @classmethod
    def from_spacing(cls, domain, spacing) -> "GridGeometry":
        """Grid whose node count best matches the requested spacing.

        The domain is kept exactly; the realized spacing is
        ``(max - min) / round((max - min) / spacing)``.
        """
        (a1, b1), (a2, b2) = domain
        if np.isscalar(spacing):
            spacing = (spacing, spacing)
        n1 = int(round((b1 - a1) / spacing[0])) + 1
        n2 = int(round((b2 - a2) / spacing[1])) + 1
        return cls(float(a1), float(b1), float(a2), float(b2), n1, n2)

    @property
    def d1(self) -> float:
        return (self.y1_max - self.y1_min) / (self.n1 - 1)

    @property
    def d2(self) -> float:
        return (self.y2_max - self.y2_min) / (self.n2 - 1)

    @property
    def cell_area(self) -> float:
        return self.d1 * self.d2

    @property
    def y1(self) -> np.ndarray:
        return np.linspace(self.y1_min, self.y1_max, self.n1)

    @property
    def y2(self) -> np.ndarray:
        return np.linspace(self.y2_min, self.y2_max, self.n2)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    def mesh(self):
        """Node coordinates, each of shape ``(n1, n2)`` (``ij`` indexing)."""
        return np.meshgrid(self.y1, self.y2, indexing="ij")

    def points(self) -> np.ndarray:
        y1, y2 = self.mesh()
        return np.stack([y1, y2], axis=-1)

    def refined(self, factor: int = 2) -> "GridGeometry":
        return GridGeometry(self.y1_min, self.y1_max, self.y2_min, self.y2_max,
                            (self.n1 - 1) * factor + 1, (self.n2 - 1) * factor + 1)


@dataclass
class PdfGrid:
    """Density values at the nodes of ``geometry`` at one time.

    ``values[i, j]`` is the density at ``(y1[i], y2[j])``.
    """

    values: np.ndarray
    geometry: GridGeometry
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.geometry.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.geometry.shape}")

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.geometry.cell_area)

    def __getitem__(self, idx):
        return self.values[idx]


@dataclass(frozen=True)
class SolverGrid:
    """Space-time grid of one solve."""

    geometry: GridGeometry
    dt: float
    t_final: float
    report_times: tuple[float, ...]

    def __post_init__(self):
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("dt and t_final must be positive")
        for t in self.report_times:
            if t < 0 or t > self.t_final + 1e-12:
                raise ValueError(f"report time {t} outside [0, {self.t_final}]")
            if abs(t / self.dt - round(t / self.dt)) > 1e-6:
                raise ValueError(f"report time {t} is not on the time grid (dt={self.dt})")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def step_index(self, t: float) -> int:
        return int(round(t / self.dt))
