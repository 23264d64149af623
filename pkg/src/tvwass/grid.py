"""Uniform square grids and nonnegative cell densities.

Fields are stored as intensities (value per unit area), so the mass of a
cell is ``value * h**2``.  Arrays are indexed ``[iy, ix]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Axis-aligned square-cell grid covering a rectangle.

    Attributes
    ----------
    nx, ny : int
        Number of cells along each axis (at least 2).
    origin : tuple of float
        Physical coordinates of the lower-left corner of the domain.
    h : float
        Cell side length (same along both axes).
    """

    nx: int
    ny: int
    origin: tuple
    h: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs at least 2 cells per axis, got {self.nx}x{self.ny}")
        if not (self.h > 0.0 and np.isfinite(self.h)):
            raise ValueError(f"cell spacing must be positive, got {self.h}")

    @property
    def extent(self):
        return (self.nx * self.h, self.ny * self.h)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def cell_area(self):
        return self.h * self.h

    def diameter_sq(self):
        """Squared diameter of the covered rectangle."""
        ex, ey = self.extent
        return ex * ex + ey * ey

    def xs(self):
        """Cell-center x coordinates, shape (nx,)."""
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    def ys(self):
        """Cell-center y coordinates, shape (ny,)."""
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    def centers(self):
        """Cell-center coordinates, two arrays of shape (ny, nx)."""
        return np.meshgrid(self.xs(), self.ys())


def make_grid(n, origin=(0.0, 0.0), side=1.0):
    """Square grid with ``n`` x ``n`` cells on a square of length ``side``."""
    if n < 2:
        raise ValueError(f"need n >= 2 cells, got {n}")
    if not side > 0.0:
        raise ValueError(f"side must be positive, got {side}")
    return Grid(nx=int(n), ny=int(n), origin=(float(origin[0]), float(origin[1])), h=side / n)


@dataclass
class Density:
    """Nonnegative intensity field on a grid.

    ``values[iy, ix]`` is the density of cell (ix, iy); the cell carries
    mass ``values[iy, ix] * grid.h**2``.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0.0):
            raise ValueError("density values must be nonnegative")
        self.values = v

    @property
    def h(self):
        return self.grid.h


def mass(rho):
    """Total mass, the cell-area weighted sum of intensities."""
    return float(rho.values.sum() * rho.grid.cell_area)


def barycenter(rho):
    """Mass-weighted mean of the cell centers."""
    m = mass(rho)
    if m <= 0.0:
        raise ValueError("barycenter undefined for zero mass")
    xx, yy = rho.grid.centers()
    w = rho.values * rho.grid.cell_area
    return (float((w * xx).sum() / m), float((w * yy).sum() / m))


def second_moment(rho, center):
    """Mass-normalized second moment about ``center``."""
    m = mass(rho)
    if m <= 0.0:
        raise ValueError("second moment undefined for zero mass")
    xx, yy = rho.grid.centers()
    r2 = (xx - center[0]) ** 2 + (yy - center[1]) ** 2
    return float((rho.values * r2).sum() * rho.grid.cell_area / m)


def rasterize_ball(grid, center, radius):
    """Unit-mass uniform disk sampled at cell centers.

    Cells whose centers lie inside the disk get the value ``1/(pi r^2)``,
    then the field is renormalized so the discrete mass is exactly one.
    The disk must lie strictly inside the domain.
    """
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    ox, oy = grid.origin
    ex, ey = grid.extent
    cx, cy = center
    if (cx - radius <= ox or cx + radius >= ox + ex
            or cy - radius <= oy or cy + radius >= oy + ey):
        raise ValueError("ball touches or crosses the domain boundary")
    xx, yy = grid.centers()
    inside = (xx - cx) ** 2 + (yy - cy) ** 2 < radius * radius
    if not inside.any():
        raise ValueError("ball smaller than one cell, nothing rasterized")
    values = inside / (np.pi * radius * radius)
    values = values / (values.sum() * grid.cell_area)
    return Density(grid, values)
