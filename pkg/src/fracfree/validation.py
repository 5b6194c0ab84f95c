"""Accuracy harness for the discrete operator: constant annihilation, the
``(1 - |x|^2)_+^alpha`` profile and the plane-wave symbol, each at three
resolutions with a decreasing-error requirement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fractional import (
    build_kernel,
    energy_apply,
    energy_apply_reference,
    frac_laplacian_apply_fast,
    normalization_constant,
    profile_constant,
    profile_pv_quadrature,
)
from .grid import build_grid

PROFILE_POINTS = {1: (101, 201, 401), 2: (33, 65, 129)}
SYMBOL_LEVELS = {
    1: ((10 * math.pi, 629), (20 * math.pi, 2513), (40 * math.pi, 10053)),
    2: ((4 * math.pi, 101), (6 * math.pi, 301), (8 * math.pi, 801)),
}


@dataclass
class CheckResult:
    name: str
    errors: list
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(name=self.name, errors=list(self.errors), passed=self.passed, **self.detail)


def strictly_decreasing(values) -> bool:
    v = [abs(x) for x in values]
    return all(b < a for a, b in zip(v, v[1:]))


def constant_field_check(dimension: int, alpha: float, points=None, tol: float = 1e-12,
                         c_norm: float | None = None, workers: int = 1) -> CheckResult:
    """Tail-free operator on ``u = 1``: exact zero on the direct sum, rounding-level on the fast path.

    The fast-path error is measured relative to the largest row sum, the
    scale of the two cancelling terms.
    """
    points = points or PROFILE_POINTS[dimension]
    errs, ref = [], []
    for N in points:
        grid = build_grid(dimension, 2.0, N)
        k = build_kernel(grid, alpha, tail=False, c_norm=c_norm, workers=workers)
        u = np.ones(grid.shape)
        errs.append(float(np.max(np.abs(energy_apply(k, u))) / np.max(k.row_sum)))
        if grid.size <= 4096:
            ref.append(float(np.max(np.abs(energy_apply_reference(k, u)))))
    return CheckResult("constant_field", errs, all(e <= tol for e in errs) and all(r <= tol for r in ref),
                       dict(points=list(points), reference_errors=ref, tolerance=tol))


def profile_check(dimension: int, alpha: float, points=None, radius: float = 0.5, c_norm: float | None = None,
                  workers: int = 1) -> CheckResult:
    """Max relative deviation from the exact constant on ``|x| <= radius``, box ``[-2, 2]^n``."""
    points = points or PROFILE_POINTS[dimension]
    exact = profile_constant(alpha, dimension)
    errs = []
    for N in points:
        grid = build_grid(dimension, 2.0, N)
        k = build_kernel(grid, alpha, c_norm=c_norm, workers=workers)
        r = grid.radius_from((0.0,) * dimension)
        v = frac_laplacian_apply_fast(k, np.maximum(1.0 - r * r, 0.0) ** alpha)
        errs.append(float(np.max(np.abs(v[r <= radius] / exact - 1.0))))
    detail = dict(points=list(points), exact=exact)
    if dimension == 1:
        detail["quadrature_at_0"] = profile_pv_quadrature(0.0, alpha)
        detail["quadrature_at_half"] = profile_pv_quadrature(0.5, alpha)
    return CheckResult("profile", errs, strictly_decreasing(errs), detail)


def symbol_check(dimension: int, alpha: float, levels=None, wavenumber: float = 1.0, c_norm: float | None = None,
                 workers: int = 1) -> CheckResult:
    """``[(-Delta)^alpha_h cos(k x_1)](0) / k^(2 alpha) - 1`` on growing, refining boxes."""
    levels = levels or SYMBOL_LEVELS[dimension]
    errs = []
    for L, N in levels:
        grid = build_grid(dimension, L, N)
        k = build_kernel(grid, alpha, c_norm=c_norm, workers=workers)
        v = frac_laplacian_apply_fast(k, np.cos(wavenumber * grid.coords[0]))
        centre = (grid.N // 2,) * dimension
        errs.append(float(v[centre] / wavenumber ** (2 * alpha) - 1.0))
    return CheckResult("symbol", errs, strictly_decreasing(errs),
                       dict(levels=[[float(L), int(N)] for L, N in levels], wavenumber=wavenumber))


def validate_kernel(dimension: int, alpha: float, *, c_norm_scale: float = 1.0, workers: int = 1,
                    profile_points=None, symbol_levels=None) -> dict:
    """Run the three checks; ``c_norm_scale`` perturbs the constant for fault-injection tests."""
    c = normalization_constant(dimension, alpha) * c_norm_scale
    checks = [
        constant_field_check(dimension, alpha, profile_points, c_norm=c, workers=workers),
        profile_check(dimension, alpha, profile_points, c_norm=c, workers=workers),
        symbol_check(dimension, alpha, symbol_levels, c_norm=c, workers=workers),
    ]
    return dict(dimension=dimension, alpha=alpha, c_norm=c, passed=all(ch.passed for ch in checks),
                checks=[ch.as_dict() for ch in checks])
