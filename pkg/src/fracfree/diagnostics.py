"""Quantitative checks on computed fields: bounds, volume, Hoelder growth,
free boundary, non-degeneracy, densities and the Harnack ratio.

Free-boundary points are face midpoints between a cell with ``u > tau_pos``
and a neighbour without.  Every function takes the grid explicitly and works
on plain arrays of shape ``grid.shape``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import GridSpec, ball_indices

SECTIONS = ("bounds", "volume", "holder", "free_boundary", "nondegeneracy", "density", "harnack")


class DiagnosticWarning(UserWarning):
    pass


# --- bounds and volume ----------------------------------------------------------


@dataclass(frozen=True)
class BoundsReport:
    min_u: float
    max_u: float
    lower_violation: float
    upper_violation: float

    def within(self, tol: float) -> bool:
        return self.lower_violation <= tol and self.upper_violation <= tol


def bounds_check(u, phi) -> BoundsReport:
    u = np.asarray(u, dtype=float)
    top = float(np.max(phi))
    lo, hi = float(np.min(u)), float(np.max(u))
    return BoundsReport(lo, hi, max(0.0, -lo), max(0.0, hi - top))


def positivity_volume(grid: GridSpec, u, chi_omega, tau_pos: float) -> float:
    if tau_pos < 0:
        raise ValueError("tau_pos must be non-negative")
    u, chi = grid.check(u, "u"), grid.check(chi_omega, "chi_omega")
    return grid.cell_volume * float(np.count_nonzero((u > tau_pos) & (chi == 0)))


# --- Hoelder seminorm -------------------------------------------------------------


@dataclass(frozen=True)
class HolderEstimate:
    lam: float
    seminorm: float
    pair_count: int


def _offsets(shape: tuple[int, ...]):
    """Offsets covering every unordered pair of sample points exactly once."""
    if len(shape) == 1:
        for k in range(1, shape[0]):
            yield (k,)
        return
    m0, m1 = shape
    for a in range(0, m0):
        for b in range(-(m1 - 1), m1):
            if a == 0 and b <= 0:
                continue
            yield (a, b)


def _shift_pair(v: np.ndarray, off: tuple[int, ...]):
    first, second = [], []
    for k in off:
        if k >= 0:
            first.append(slice(0, v.shape[len(first)] - k))
            second.append(slice(k, None))
        else:
            first.append(slice(-k, None))
            second.append(slice(0, v.shape[len(second)] + k))
    return v[tuple(first)], v[tuple(second)]


def holder_seminorm(grid: GridSpec, u, lam: float, stride: int = 1, region=None) -> HolderEstimate:
    """``sup |u(x) - u(y)| / |x - y|^lam`` over pairs of sample points.

    Sample points are every ``stride``-th grid point along each axis, so all
    pairs are at least ``stride * h`` apart.  The distance of an offset
    ``k`` is ``h * stride * |k|``.  With a boolean ``region`` only pairs
    with both points inside it are used.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    u = grid.check(u, "u")
    sub = (slice(None, None, stride),) * grid.dimension
    v = u[sub]
    keep = None if region is None else np.asarray(region, dtype=bool).reshape(grid.shape)[sub]
    step = grid.h * stride
    best, count = 0.0, 0
    for off in _offsets(v.shape):
        a, b = _shift_pair(v, off)
        diff = np.abs(a - b)
        if keep is not None:
            ka, kb = _shift_pair(keep, off)
            diff = diff[ka & kb]
        if diff.size == 0:
            continue
        dist = step * math.sqrt(sum(k * k for k in off))
        best = max(best, float(np.max(diff)) / dist**lam)
        count += diff.size
    return HolderEstimate(float(lam), best, count)


# --- free boundary ------------------------------------------------------------------


@dataclass
class FreeBoundaryExtract:
    """Faces separating ``{u > tau_pos}`` from its complement.

    ``points`` are face midpoints (one row per face), ``axes`` the normal
    axis of each face.  ``measure_estimate`` is the point count in 1D and the
    length of the linearly interpolated ``tau_pos`` contour in 2D;
    ``face_measure`` is the raw face count times ``h^(n-1)``.
    """

    grid: GridSpec
    points: np.ndarray
    axes: np.ndarray
    inside_omega: np.ndarray
    distance_to_omega: np.ndarray
    component: np.ndarray
    measure_estimate: float
    face_measure: float
    warnings: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def component_distances(self) -> dict:
        out = {}
        for c, d in zip(self.component.tolist(), self.distance_to_omega.tolist()):
            out[c] = min(out.get(c, math.inf), d)
        return dict(sorted(out.items()))

    def summary(self) -> dict:
        return dict(
            faces=self.size,
            interior_faces=int(np.count_nonzero(self.inside_omega)),
            exterior_faces=int(np.count_nonzero(~self.inside_omega)),
            measure_estimate=self.measure_estimate,
            face_measure=self.face_measure,
            component_distance_to_omega={str(k): v for k, v in self.component_distances().items()},
            warnings=list(self.warnings),
        )


def _distance_to_set(mask: np.ndarray, h: float) -> np.ndarray:
    """Distance from each cell to the nearest cell of ``mask`` (``inf`` if ``mask`` is empty)."""
    if not np.any(mask):
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~mask) * h


def _contour_length(grid: GridSpec, u: np.ndarray, level: float) -> float:
    from skimage import measure

    # pad with the zero exterior so contours touching the box close up
    padded = np.pad(u, 1, mode="constant", constant_values=min(level, 0.0) - 1.0)
    total = 0.0
    for c in measure.find_contours(padded, level):
        seg = np.diff(c, axis=0)
        total += float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))
    return total * grid.h


def free_boundary_extract(grid: GridSpec, u, tau_pos: float, chi_omega=None) -> FreeBoundaryExtract:
    u = grid.check(u, "u")
    pos = u > tau_pos
    h, n = grid.h, grid.dimension
    chi = np.zeros(grid.shape, dtype=bool) if chi_omega is None else grid.check(chi_omega, "chi_omega") > 0
    labels, _ = ndimage.label(pos)
    d_omega = _distance_to_set(chi, h)
    pts, axes, inside, dist, comp = [], [], [], [], []
    for ax in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[ax], hi[ax] = slice(0, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        idx = np.nonzero(pos[lo] != pos[hi])
        if idx[0].size == 0:
            continue
        a = idx
        b = tuple(i + (1 if k == ax else 0) for k, i in enumerate(idx))
        mid = np.stack([grid.axis[i] + (0.5 * h if k == ax else 0.0) for k, i in enumerate(idx)], axis=1)
        pts.append(mid)
        axes.append(np.full(mid.shape[0], ax))
        inside.append(chi[a] & chi[b])
        dist.append(np.minimum(d_omega[a], d_omega[b]))
        comp.append(np.maximum(labels[a], labels[b]))
    if pts:
        points = np.concatenate(pts)
        order = np.lexsort(points.T[::-1])
        points = points[order]
        axes_, inside_, dist_, comp_ = (np.concatenate(v)[order] for v in (axes, inside, dist, comp))
    else:
        points = np.zeros((0, n))
        axes_ = comp_ = np.zeros(0, dtype=int)
        inside_ = np.zeros(0, dtype=bool)
        dist_ = np.zeros(0)
    face_measure = points.shape[0] * h ** (n - 1)
    if n == 1:
        measure = float(points.shape[0])
    else:
        measure = _contour_length(grid, u, tau_pos) if points.shape[0] else 0.0
    notes = []
    if points.shape[0] == 0:
        if np.all(pos):
            notes.append("field is positive on the whole box: boundary lies outside the computational domain")
        else:
            notes.append("empty free boundary")
        for m in notes:
            warnings.warn(m, DiagnosticWarning, stacklevel=2)
    return FreeBoundaryExtract(grid, points, axes_, inside_, dist_, comp_, measure, face_measure, notes)


# --- non-degeneracy and densities ----------------------------------------------------


def _distance_to_boundaries(grid: GridSpec, x0: np.ndarray, chi: np.ndarray) -> float:
    """Distance from ``x0`` to the nearer of the Omega boundary and the box boundary."""
    d_box = grid.L - float(np.max(np.abs(x0)))
    if not np.any(chi) or np.all(chi):
        return d_box
    r = np.sqrt(sum((c - x) ** 2 for c, x in zip(grid.coords, x0)))
    # a cell of the other side lies within h/2 of the boundary
    near = chi != _side(grid, x0, chi)
    return min(d_box, float(np.min(r[near])) if np.any(near) else math.inf)


def _side(grid: GridSpec, x0: np.ndarray, chi: np.ndarray) -> bool:
    idx = tuple(int(round((x + grid.L) / grid.h)) for x in x0)
    idx = tuple(min(max(i, 0), grid.N - 1) for i in idx)
    return bool(chi[idx])


def default_radii(grid: GridSpec, dist: float) -> np.ndarray:
    """Radii ``m h`` (``m >= 3``) below ``dist / 2``.

    Boundary points are face midpoints, so integer multiples of ``h`` never
    tie with a cell distance.
    """
    m = np.arange(3, int(0.5 * dist / grid.h) + 2)
    r = m * grid.h
    return r[r < 0.5 * dist]


@dataclass(frozen=True)
class PointScan:
    point: tuple
    slope: float
    min_ratio: float
    radii: int
    flagged: bool


@dataclass
class NondegeneracyScan:
    alpha: float
    points: list

    @property
    def slopes(self) -> np.ndarray:
        return np.array([p.slope for p in self.points if not p.flagged])

    @property
    def median_slope(self) -> float:
        s = self.slopes
        return float(np.median(s)) if s.size else float("nan")

    @property
    def flagged(self) -> int:
        return sum(p.flagged for p in self.points)

    def summary(self) -> dict:
        s = self.slopes
        return dict(points=len(self.points), flagged=self.flagged, median_slope=self.median_slope,
                    min_slope=float(np.min(s)) if s.size else float("nan"),
                    max_slope=float(np.max(s)) if s.size else float("nan"),
                    min_growth_ratio=float(min((p.min_ratio for p in self.points if not p.flagged),
                                               default=float("nan"))))


def nondegeneracy_scan(grid: GridSpec, u, boundary: FreeBoundaryExtract, alpha: float, chi_omega=None,
                       radii=None) -> NondegeneracyScan:
    """Fit ``log sup_{B_r(x0)} u`` against ``log r`` at each boundary point.

    Without explicit ``radii`` each point uses ``m h`` with ``m >= 3`` below
    ``dist/2``, ``dist`` being the distance to the nearer of the Omega
    boundary and the box boundary.  Fewer than three radii, or a vanishing
    supremum, flags the point.
    """
    u = grid.check(u, "u")
    chi = np.zeros(grid.shape, dtype=bool) if chi_omega is None else grid.check(chi_omega, "chi_omega") > 0
    flat = u.ravel()
    out = []
    for x0 in boundary.points:
        rs = np.asarray(radii, dtype=float) if radii is not None else \
            default_radii(grid, _distance_to_boundaries(grid, x0, chi))
        sups = np.array([float(np.max(flat[ball_indices(grid, x0, r)], initial=0.0)) for r in rs])
        if rs.size < 3 or np.any(sups <= 0):
            out.append(PointScan(tuple(x0.tolist()), float("nan"), float("nan"), int(rs.size), True))
            continue
        slope = float(np.polyfit(np.log(rs), np.log(sups), 1)[0])
        out.append(PointScan(tuple(x0.tolist()), slope, float(np.min(sups / rs**alpha)), int(rs.size), False))
    return NondegeneracyScan(float(alpha), out)


@dataclass
class DensityCheck:
    points: list
    min_positive: np.ndarray
    min_zero: np.ndarray

    @property
    def min_density_positive(self) -> float:
        return float(np.min(self.min_positive)) if self.min_positive.size else float("nan")

    @property
    def min_density_zero(self) -> float:
        return float(np.min(self.min_zero)) if self.min_zero.size else float("nan")

    def summary(self) -> dict:
        return dict(points=len(self.points), min_density_positive=self.min_density_positive,
                    min_density_zero=self.min_density_zero,
                    degenerate_points=int(np.count_nonzero((self.min_positive == 0) | (self.min_zero == 0))))


def density_check(grid: GridSpec, u, boundary: FreeBoundaryExtract, tau_pos: float, chi_omega=None,
                  radii=None) -> DensityCheck:
    """Minimum over radii of ``|{u > tau} n B_r| / r^n`` and ``|{u <= tau} n B_r| / r^n`` per point."""
    u = grid.check(u, "u")
    chi = np.zeros(grid.shape, dtype=bool) if chi_omega is None else grid.check(chi_omega, "chi_omega") > 0
    pos = (u > tau_pos).ravel()
    hn, n = grid.cell_volume, grid.dimension
    if radii is not None and np.any(np.asarray(radii) < 3 * grid.h - 1e-12):
        raise ValueError("density radii must be at least 3h")
    pts, mp, mz = [], [], []
    for x0 in boundary.points:
        rs = np.asarray(radii, dtype=float) if radii is not None else \
            default_radii(grid, _distance_to_boundaries(grid, x0, chi))
        if rs.size == 0:
            continue
        dp, dz = [], []
        for r in rs:
            idx = ball_indices(grid, x0, r)
            k = int(np.count_nonzero(pos[idx]))
            dp.append(k * hn / r**n)
            dz.append((idx.size - k) * hn / r**n)
        pts.append(tuple(x0.tolist()))
        mp.append(min(dp))
        mz.append(min(dz))
    return DensityCheck(pts, np.array(mp), np.array(mz))


# --- Harnack ratio -------------------------------------------------------------------


@dataclass(frozen=True)
class HarnackResult:
    ratio: float
    sup: float
    inf: float
    cells: int
    inradius: float
    flagged: bool


def harnack_ratio(grid: GridSpec, u, phi, chi_omega, tau_pos: float, shrink: float = 0.25,
                  tol: float = 1e-4, region=None) -> HarnackResult:
    """``sup u / inf u`` over ``D'``, the part of ``D`` deeper than ``shrink`` times its inradius.

    ``D`` is the non-contact part of Omega together with the exterior
    positivity set, unless an explicit boolean ``region`` is given.  Depth is
    the Euclidean distance to the nearest cell outside ``D``, or to the box
    boundary.  A non-positive infimum gives an infinite, flagged ratio.
    """
    if not 0.0 < shrink < 1.0:
        raise ValueError("shrink must lie in (0, 1)")
    u, phi = grid.check(u, "u"), grid.check(phi, "phi")
    chi = grid.check(chi_omega, "chi_omega") > 0
    if region is None:
        D = (chi & (u > phi + tol)) | (~chi & (u > tau_pos))
    else:
        D = np.asarray(region, dtype=bool).reshape(grid.shape)
    depth = ndimage.distance_transform_edt(np.pad(D, 1))[(slice(1, -1),) * grid.dimension] * grid.h
    inradius = float(np.max(depth)) if np.any(D) else 0.0
    Dp = D & (depth > shrink * inradius)
    if not np.any(Dp):
        raise ValueError("the shrunken region D' is empty")
    sup, inf = float(np.max(u[Dp])), float(np.min(u[Dp]))
    if inf <= 0.0:
        return HarnackResult(math.inf, sup, inf, int(np.count_nonzero(Dp)), inradius, True)
    return HarnackResult(sup / inf, sup, inf, int(np.count_nonzero(Dp)), inradius, False)


# --- summary -------------------------------------------------------------------------


def diagnostics_summary(grid: GridSpec, u, phi, chi_omega, alpha: float, tau_pos: float, *,
                        tol: float = 1e-4, shrink: float = 0.25, stride: int | None = None,
                        bound_tol: float = 0.0) -> tuple[dict, NondegeneracyScan, DensityCheck]:
    """All seven diagnostic sections as a plain dictionary, plus the per-point scans."""
    u = grid.check(u, "u")
    if stride is None:
        stride = 1 if grid.dimension == 1 else max(1, grid.N // 33)
    b = bounds_check(u, phi)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DiagnosticWarning)
        fb = free_boundary_extract(grid, u, tau_pos, chi_omega)
    nd = nondegeneracy_scan(grid, u, fb, alpha, chi_omega)
    dc = density_check(grid, u, fb, tau_pos, chi_omega)
    holder = {}
    for name, lam in (("alpha", alpha), ("above_alpha", 0.5 * (alpha + 1.0))):
        est = holder_seminorm(grid, u, lam, stride)
        holder[name] = dict(lam=est.lam, seminorm=est.seminorm, pair_count=est.pair_count)
    try:
        hr = harnack_ratio(grid, u, phi, chi_omega, tau_pos, shrink, tol)
        harnack = dict(ratio=hr.ratio, sup=hr.sup, inf=hr.inf, cells=hr.cells, inradius=hr.inradius,
                       flagged=hr.flagged, shrink=shrink)
    except ValueError as exc:
        harnack = dict(ratio=float("nan"), flagged=True, error=str(exc), shrink=shrink)
    summary = dict(
        bounds=dict(min_u=b.min_u, max_u=b.max_u, lower_violation=b.lower_violation,
                    upper_violation=b.upper_violation, within_tolerance=b.within(bound_tol)),
        volume=dict(positivity_volume=positivity_volume(grid, u, chi_omega, tau_pos), tau_pos=tau_pos),
        holder=dict(stride=stride, **holder),
        free_boundary=dict(fb.summary(), warnings=[str(w.message) for w in caught]),
        nondegeneracy=nd.summary(),
        density=dc.summary(),
        harnack=harnack,
    )
    return summary, nd, dc
