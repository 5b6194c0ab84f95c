import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracfree.diagnostics import (
    SECTIONS,
    DiagnosticWarning,
    FreeBoundaryExtract,
    bounds_check,
    default_radii,
    density_check,
    diagnostics_summary,
    free_boundary_extract,
    harnack_ratio,
    holder_seminorm,
    nondegeneracy_scan,
    positivity_volume,
)
from fracfree.grid import DomainSpec, build_grid, bump, indicator_omega
from fracfree.solver import default_tau_pos

# --- bounds and volume -----------------------------------------------------------------------


def test_bounds():
    g = build_grid(1, 2.0, 41)
    phi = bump(g.radius_from((0.0,)), 1.0, 0.5)
    b = bounds_check(phi, phi)
    assert b.lower_violation == 0.0 and b.upper_violation == 0.0
    b = bounds_check(phi + 0.25, phi)
    assert b.upper_violation == pytest.approx(0.25, rel=1e-15)
    assert not b.within(0.1) and b.within(0.3)
    assert bounds_check(phi - 2.0, phi).lower_violation == pytest.approx(2.0 - 0.0, rel=1e-15)


def test_positivity_volume_trivial():
    g = build_grid(2, 2.0, 41)
    chi = indicator_omega(DomainSpec.ball((0.0, 0.0), 1.0), g)
    assert positivity_volume(g, np.zeros(g.shape), chi, 1e-8) == 0.0
    box = g.size * g.cell_volume
    omega_h = float(np.sum(chi)) * g.cell_volume
    assert positivity_volume(g, np.ones(g.shape), chi, 1e-8) == pytest.approx(box - omega_h, rel=1e-14)


def test_positivity_volume_converges_under_refinement():
    vols, hs = [], []
    for N in (101, 201, 401, 801):
        g = build_grid(1, 2.0, N)
        chi = indicator_omega(DomainSpec.box(-1.0, 1.0), g)
        u = bump(g.radius_from((1.3,)), 1.0, 0.37)
        vols.append(positivity_volume(g, u, chi, 1e-8))
        hs.append(g.h)
    # counting error is at most one cell per end of the positive interval
    assert all(abs(b - a) <= 2 * h for a, b, h in zip(vols, vols[1:], hs))
    # the bump exceeds 1e-8 out to s^2 = 1 - 1/(1 + log(1e8)) of its radius
    edge = 1.3 + 0.37 * (1 - 1 / (1 + 8 * np.log(10))) ** 0.5
    assert vols[-1] == pytest.approx(edge - 1.0, abs=2 * hs[-1])


# --- Hoelder seminorm ------------------------------------------------------------------------


def test_holder_constant_is_zero():
    g = build_grid(2, 1.0, 9)
    assert holder_seminorm(g, np.full(g.shape, 3.0), 0.5).seminorm == 0.0


def _brute_holder(grid, u, lam):
    pts, vals = grid.points, u.ravel()
    best = 0.0
    for i, j in itertools.combinations(range(grid.size), 2):
        d = float(np.linalg.norm(pts[i] - pts[j]))
        best = max(best, abs(vals[i] - vals[j]) / d**lam)
    return best


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 2), N=st.integers(3, 7), lam=st.floats(0.05, 1.0))
def test_holder_matches_all_pairs(seed, n, N, lam):
    g = build_grid(n, 1.0, N)
    u = np.random.default_rng(seed).standard_normal(g.shape)
    assert holder_seminorm(g, u, lam).seminorm == pytest.approx(_brute_holder(g, u, lam), rel=1e-12)


def test_holder_oracle_power_field():
    alpha = 0.5
    est = []
    for N in (7, 51, 401):
        g = build_grid(1, 2.0, N)
        u = np.abs(g.axis) ** alpha
        est.append((holder_seminorm(g, u, alpha).seminorm, holder_seminorm(g, u, 0.5 * (alpha + 1)).seminorm))
    lo = [e[0] for e in est]
    hi = [e[1] for e in est]
    assert all(abs(b - a) / a <= 0.25 for a, b in zip(lo, lo[1:]))
    assert all(b / a >= 1.5 for a, b in zip(hi, hi[1:]))


def test_holder_region_and_validation():
    g = build_grid(1, 1.0, 21)
    u = np.where(g.axis > 0, 1.0, 0.0)
    assert holder_seminorm(g, u, 0.5, region=g.axis > 0).seminorm == 0.0
    with pytest.raises(ValueError):
        holder_seminorm(g, u, 0.0)
    with pytest.raises(ValueError):
        holder_seminorm(g, u, 0.5, stride=0)


# --- free boundary ---------------------------------------------------------------------------


def _disk_field(N, R=1.0):
    g = build_grid(2, 2.0, N)
    return g, np.maximum(R * R - g.radius_from((0.0, 0.0)) ** 2, 0.0)


def test_disk_perimeter_oracle():
    g, u = _disk_field(201)
    fb = free_boundary_extract(g, u, 1e-8)
    assert abs(fb.measure_estimate - 2 * math.pi) / (2 * math.pi) <= 0.15
    assert fb.size > 0 and np.all(~fb.inside_omega)


def test_face_measure_bounded_under_refinement():
    m = [free_boundary_extract(*_disk_field(N), 1e-8).face_measure for N in (51, 101, 201)]
    assert max(m) / min(m) <= 1.1
    c = [free_boundary_extract(*_disk_field(N), 1e-8).measure_estimate for N in (51, 101, 201)]
    assert max(c) / min(c) <= 1.1


def test_empty_and_full_boundaries():
    g = build_grid(2, 1.0, 11)
    with pytest.warns(DiagnosticWarning, match="empty"):
        fb = free_boundary_extract(g, np.zeros(g.shape), 1e-8)
    assert fb.size == 0 and fb.measure_estimate == 0.0
    with pytest.warns(DiagnosticWarning, match="whole box"):
        fb = free_boundary_extract(g, np.ones(g.shape), 1e-8)
    assert fb.size == 0


def test_boundary_points_1d_and_components():
    g = build_grid(1, 2.0, 41)
    chi = indicator_omega(DomainSpec.box(-1.0, 1.0), g)
    u = bump(g.radius_from((0.0,)), 1.0, 0.5) + bump(g.radius_from((1.5,)), 1.0, 0.3)
    fb = free_boundary_extract(g, u, 1e-8, chi)
    assert fb.size == 4 and fb.measure_estimate == 4.0
    assert fb.inside_omega.tolist() == [True, True, False, False]
    assert len(fb.component_distances()) == 2
    # face midpoints sit half a cell from grid points
    assert np.allclose(np.mod(fb.points[:, 0] + g.L, g.h), 0.5 * g.h)


# --- non-degeneracy and density -------------------------------------------------------------


def test_nondegeneracy_power_field():
    alpha = 0.5
    g = build_grid(1, 2.0, 2001)
    u = np.abs(g.axis) ** alpha
    fb = free_boundary_extract(g, u, 1e-12)
    scan = nondegeneracy_scan(g, u, fb, alpha, radii=[0.05, 0.1, 0.2, 0.4, 0.8])
    assert scan.flagged == 0
    assert scan.median_slope == pytest.approx(alpha, abs=1e-2)


def test_nondegeneracy_flags_vanishing_sup():
    g = build_grid(1, 2.0, 101)
    u = np.zeros(g.shape)
    fake = FreeBoundaryExtract(g, np.array([[0.01]]), np.array([0]), np.array([False]), np.array([0.0]),
                               np.array([1]), 1.0, 1.0)
    scan = nondegeneracy_scan(g, u, fake, 0.5)
    assert scan.flagged == 1 and math.isnan(scan.median_slope)


def test_nondegeneracy_scale_invariant(standard_1d):
    problem, u, _ = standard_1d
    g = problem.grid
    fb = free_boundary_extract(g, u, default_tau_pos(problem), problem.chi)
    s1 = nondegeneracy_scan(g, u, fb, 0.5, problem.chi).slopes
    s2 = nondegeneracy_scan(g, 7.3 * u, fb, 0.5, problem.chi).slopes
    assert np.allclose(s1, s2, rtol=0, atol=1e-10)


def test_default_radii():
    g = build_grid(1, 2.0, 201)
    r = default_radii(g, 0.5)
    assert r[0] == pytest.approx(3 * g.h) and np.all(r < 0.25)
    assert default_radii(g, 0.05).size == 0


def test_density_half_line():
    g = build_grid(1, 2.0, 201)
    u = np.maximum(g.axis, 0.0)
    fb = free_boundary_extract(g, u, 1e-12)
    dc = density_check(g, u, fb, 1e-12)
    assert dc.min_density_positive == pytest.approx(1.0, rel=1e-12)
    assert dc.min_density_zero == pytest.approx(1.0, rel=1e-12)


def test_density_zero_set_absent():
    g = build_grid(1, 2.0, 101)
    u = np.ones(g.shape)
    fake = FreeBoundaryExtract(g, np.array([[0.01]]), np.array([0]), np.array([False]), np.array([0.0]),
                               np.array([1]), 1.0, 1.0)
    dc = density_check(g, u, fake, 1e-8)
    assert dc.min_density_zero == 0.0
    assert dc.summary()["degenerate_points"] == 1
    with pytest.raises(ValueError):
        density_check(g, u, fake, 1e-8, radii=[g.h])


# --- Harnack -----------------------------------------------------------------------------------


def test_harnack_constant_field():
    g = build_grid(2, 2.0, 41)
    chi = indicator_omega(DomainSpec.ball((0.0, 0.0), 1.0), g)
    u = np.full(g.shape, 2.0)
    r = harnack_ratio(g, u, np.zeros(g.shape), chi, 1e-8)
    assert r.ratio == 1.0 and not r.flagged


def test_harnack_interior_zero():
    g = build_grid(1, 2.0, 81)
    u = np.ones(g.shape)
    u[40] = 0.0
    r = harnack_ratio(g, u, np.zeros(g.shape), np.zeros(g.shape), 1e-8, region=np.ones(g.shape, bool))
    assert math.isinf(r.ratio) and r.flagged


def test_harnack_scale_invariant(standard_1d):
    problem, u, _ = standard_1d
    g = problem.grid
    D = ((problem.chi > 0) & (u > problem.phi + 1e-4)) | ((problem.chi == 0) & (u > 1e-8))
    a = harnack_ratio(g, u, problem.phi, problem.chi, 1e-8, region=D)
    b = harnack_ratio(g, 3.7 * u, problem.phi, problem.chi, 1e-8, region=D)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-15)
    assert 1.0 < a.ratio < math.inf


def test_harnack_rejects_bad_input():
    g = build_grid(1, 2.0, 41)
    z = np.zeros(g.shape)
    with pytest.raises(ValueError):
        harnack_ratio(g, z, z, z, 1e-8)
    with pytest.raises(ValueError):
        harnack_ratio(g, z + 1, z, z, 1e-8, shrink=1.0)


# --- summary ----------------------------------------------------------------------------------


def test_summary_has_all_sections(standard_1d):
    problem, u, _ = standard_1d
    summary, nd, dc = diagnostics_summary(problem.grid, u, problem.phi, problem.chi, 0.5, 1e-8)
    assert set(SECTIONS) <= set(summary)
    assert summary["bounds"]["within_tolerance"]
    assert summary["nondegeneracy"]["points"] == len(nd.points) == 2


def test_summary_of_zero_field():
    g = build_grid(1, 2.0, 101)
    z = np.zeros(g.shape)
    chi = indicator_omega(DomainSpec.box(-1.0, 1.0), g)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        summary, _, _ = diagnostics_summary(g, z, z, chi, 0.5, 1e-8)
    assert summary["bounds"]["within_tolerance"]
    assert summary["free_boundary"]["warnings"] == ["empty free boundary"]
    assert summary["harnack"]["flagged"]
