"""Uniform truncated grids, domain geometry and the obstacle bump.

Fields are plain numpy arrays of shape ``grid.shape`` (``(N,)`` or ``(N, N)``,
row-major, first axis is ``x``).  :class:`ScalarField` only bundles a grid with
its values for I/O.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the box ``[-L, L]^n`` with ``N`` points per axis."""

    dimension: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.points_per_axis < 3:
            raise ValueError(f"points_per_axis must be >= 3, got {self.points_per_axis}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def n(self) -> int:
        return self.dimension

    @property
    def N(self) -> int:
        return self.points_per_axis

    @property
    def L(self) -> float:
        return self.half_width

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dimension

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dimension

    @cached_property
    def axis(self) -> np.ndarray:
        # centred integer offsets make the axis exactly antisymmetric
        return (np.arange(self.points_per_axis) - 0.5 * (self.points_per_axis - 1)) * self.h

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays, each of shape ``self.shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*([self.axis] * self.dimension), indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """All grid points as an ``(N**n, n)`` array in row-major order."""
        return np.stack([c.ravel() for c in self.coords], axis=1)

    def check(self, u: np.ndarray, name: str = "field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ValueError(f"{name} has shape {u.shape}, grid expects {self.shape}")
        return u

    def radius_from(self, center: Sequence[float]) -> np.ndarray:
        c = _as_point(center, self.dimension)
        return np.sqrt(sum((x - ck) ** 2 for x, ck in zip(self.coords, c)))


def build_grid(dimension: int, L: float, N: int) -> GridSpec:
    return GridSpec(int(dimension), float(L), int(N))


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", self.grid.check(self.values, "values"))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")


def _as_point(p, n: int) -> tuple[float, ...]:
    p = tuple(float(v) for v in np.atleast_1d(p))
    if len(p) != n:
        raise ValueError(f"point {p} does not have dimension {n}")
    return p


# --- domain geometry -------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def contains(self, grid: GridSpec) -> np.ndarray:
        return grid.radius_from(self.center) < self.radius

    def extent(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        lo = tuple(c - self.radius for c in self.center)
        hi = tuple(c + self.radius for c in self.center)
        return lo, hi

    def contains_ball(self, center, radius) -> bool:
        d = np.linalg.norm(np.subtract(center, self.center))
        return d + radius < self.radius


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def contains(self, grid: GridSpec) -> np.ndarray:
        mask = np.ones(grid.shape, dtype=bool)
        for x, a, b in zip(grid.coords, self.lo, self.hi):
            mask &= (x > a) & (x < b)
        return mask

    def extent(self):
        return self.lo, self.hi

    def contains_ball(self, center, radius) -> bool:
        return all(a < c - radius and c + radius < b for c, a, b in zip(center, self.lo, self.hi))


Primitive = Union[Ball, Box]


@dataclass(frozen=True)
class DomainSpec:
    """Open set Omega given as a union of at most four balls/boxes."""

    parts: tuple[Primitive, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not 1 <= len(self.parts) <= 4:
            raise ValueError("domain needs between 1 and 4 primitives")
        dims = {len(p.extent()[0]) for p in self.parts}
        if len(dims) != 1:
            raise ValueError("domain primitives have mixed dimensions")
        for p in self.parts:
            if isinstance(p, Ball) and not p.radius > 0:
                raise ValueError("ball radius must be positive")
            if isinstance(p, Box) and not all(a < b for a, b in zip(p.lo, p.hi)):
                raise ValueError("box corners must satisfy lo < hi")

    @property
    def dimension(self) -> int:
        return len(self.parts[0].extent()[0])

    @classmethod
    def ball(cls, center, radius) -> "DomainSpec":
        return cls((Ball(tuple(float(c) for c in np.atleast_1d(center)), float(radius)),))

    @classmethod
    def box(cls, lo, hi) -> "DomainSpec":
        return cls((Box(tuple(float(c) for c in np.atleast_1d(lo)), tuple(float(c) for c in np.atleast_1d(hi))),))

    def bounding_box(self):
        los, his = zip(*(p.extent() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)

    def validate(self, grid: GridSpec) -> None:
        if self.dimension != grid.dimension:
            raise ValueError(f"domain dimension {self.dimension} != grid dimension {grid.dimension}")
        lo, hi = self.bounding_box()
        margin = grid.L - max(np.max(np.abs(lo)), np.max(np.abs(hi)))
        if margin < 4 * grid.h - 1e-12:
            raise ValueError(
                f"domain is {margin:.4g} from the box boundary; at least 4h = {4 * grid.h:.4g} required"
            )

    def contains_ball(self, center, radius) -> bool:
        return any(p.contains_ball(center, radius) for p in self.parts)


def indicator_omega(domain: DomainSpec, grid: GridSpec) -> np.ndarray:
    """0/1 indicator of Omega at the grid points; ``1 - chi`` is the complement."""
    domain.validate(grid)
    mask = np.zeros(grid.shape, dtype=bool)
    for p in domain.parts:
        mask |= p.contains(grid)
    return mask.astype(float)


# --- obstacle --------------------------------------------------------------


@dataclass(frozen=True)
class ObstacleSpec:
    amplitude: float
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("obstacle amplitude must be positive")
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")


def bump(r: np.ndarray, amplitude: float, radius: float) -> np.ndarray:
    """``A exp(1 - 1/(1 - r^2/R^2))`` inside ``r < R``, zero outside."""
    s = (np.asarray(r, dtype=float) / radius) ** 2
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def sample_obstacle(spec: ObstacleSpec, grid: GridSpec, domain: DomainSpec | None = None) -> np.ndarray:
    center = _as_point(spec.center, grid.dimension)
    if domain is not None and not domain.contains_ball(center, spec.radius):
        raise ValueError("obstacle support is not contained in a primitive of Omega")
    if max(abs(c) for c in center) + spec.radius >= grid.L:
        raise ValueError("obstacle support leaves the computational box")
    return bump(grid.radius_from(center), spec.amplitude, spec.radius)


def ball_indices(grid: GridSpec, center, radius: float) -> np.ndarray:
    """Flat (row-major) indices of grid points with ``|x_i - center| <= radius``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    return np.flatnonzero(grid.radius_from(center) <= radius)
