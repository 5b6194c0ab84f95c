import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracfree.fractional import (
    FracParams,
    build_kernel,
    dirichlet_pairing,
    energy_apply,
    energy_apply_reference,
    frac_laplacian_apply,
    frac_laplacian_apply_fast,
    gagliardo_energy,
    gagliardo_energy_bruteforce,
    normalization_constant,
    profile_constant,
    profile_pv_quadrature,
    symbol_integral,
    tail_coefficients,
    tail_coefficients_quadrature,
)
from fracfree.grid import build_grid

ALPHAS = [0.1, 0.25, 0.5, 0.75, 0.9]


# --- normalisation constant -----------------------------------------------------------


def test_constant_1d_half():
    assert normalization_constant(1, 0.5) == pytest.approx(1 / math.pi, rel=1e-15)


def test_constant_2d_half():
    # 4^(1/2) Gamma(3/2) / (pi |Gamma(-1/2)|) with |Gamma(-1/2)| = 2 sqrt(pi)
    expected = 2 * math.gamma(1.5) / (math.pi * abs(math.gamma(-0.5)))
    assert normalization_constant(2, 0.5) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(1 / (2 * math.pi), rel=1e-15)


def test_constant_vanishes_as_alpha_to_zero():
    c = normalization_constant(1, 1e-3)
    assert 0 < c < 2e-3
    assert c == pytest.approx(1e-3 / math.pi**0.5 * math.gamma(0.5), rel=5e-3)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5])
def test_constant_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        normalization_constant(1, alpha)
    with pytest.raises(ValueError):
        FracParams(alpha, 1.0)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("alpha", [0.05, 0.25, 0.5, 0.75, 0.95])
def test_constant_matches_symbol_integral(n, alpha):
    # the constant is the reciprocal of int (1 - cos y1) |y|^(-n-2 alpha) dy
    assert normalization_constant(n, alpha) * symbol_integral(n, alpha) == pytest.approx(1.0, abs=1e-12)


# --- profile oracle ---------------------------------------------------------------------


@pytest.mark.parametrize("alpha", ALPHAS)
@pytest.mark.parametrize("x", [0.0, 0.3, 0.5, 0.8])
def test_profile_quadrature_is_constant(alpha, x):
    assert profile_pv_quadrature(x, alpha) == pytest.approx(profile_constant(alpha), rel=1e-10)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_profile_constant_1d_duplication(alpha):
    # in 1D the constant collapses to Gamma(1 + 2 alpha) by the duplication formula
    assert profile_constant(alpha) == pytest.approx(math.gamma(1 + 2 * alpha), rel=1e-14)


def test_profile_quadrature_outside_rejected():
    with pytest.raises(ValueError):
        profile_pv_quadrature(1.0, 0.5)


# --- tail -----------------------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_tail_1d_closed_form(alpha):
    g = build_grid(1, 2.0, 41)
    b = g.L + 0.5 * g.h
    x = g.axis
    expected = ((b - x) ** (-2 * alpha) + (b + x) ** (-2 * alpha)) / (2 * alpha)
    assert np.allclose(tail_coefficients(g, alpha), expected, rtol=1e-13, atol=0)


@pytest.mark.parametrize("alpha", [0.25, 0.75])
def test_tail_2d_matches_quadrature(alpha):
    g = build_grid(2, 1.0, 9)
    closed = tail_coefficients(g, alpha)
    quad = tail_coefficients_quadrature(g, alpha)
    assert np.allclose(closed, quad, rtol=1e-10, atol=0)


def test_tail_positive_symmetric_and_largest_at_edge():
    g = build_grid(2, 1.0, 11)
    t = tail_coefficients(g, 0.5)
    assert np.all(t > 0)
    assert np.allclose(t, t[::-1, :], rtol=1e-14) and np.allclose(t, t.T, rtol=1e-14)
    assert t[0, 0] == t.max()
    assert t[5, 5] == t.min()


def test_weights_symmetric_and_decreasing():
    g = build_grid(1, 2.0, 21)
    k = build_kernel(g, 0.5)
    w = k.weights
    assert np.array_equal(w, w[::-1])
    half = w[g.N:]
    assert np.all(half > 0) and np.all(np.diff(half) < 0)


# --- operator -------------------------------------------------------------------------------


@pytest.mark.parametrize("n,N", [(1, 101), (2, 25)])
@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_constant_field_annihilated(n, N, alpha):
    g = build_grid(n, 2.0, N)
    k = build_kernel(g, alpha, tail=False)
    u = np.full(g.shape, 3.7)
    assert np.max(np.abs(energy_apply_reference(k, u))) == 0.0
    assert np.max(np.abs(frac_laplacian_apply_fast(k, u))) <= 1e-12 * 3.7 * np.max(k.row_sum)


def test_fast_matches_reference_on_random_fields(rng):
    g = build_grid(1, 2.0, 64)
    k = build_kernel(g, 0.6)
    worst = 0.0
    for _ in range(50):
        u = rng.standard_normal(g.shape)
        ref = frac_laplacian_apply(k, u)
        fast = frac_laplacian_apply_fast(k, u)
        worst = max(worst, np.max(np.abs(fast - ref)) / np.max(np.abs(ref)))
    assert worst <= 1e-12


def test_fast_matches_reference_2d(rng):
    g = build_grid(2, 1.5, 14)
    k = build_kernel(g, 0.35)
    for _ in range(5):
        u = rng.standard_normal(g.shape)
        ref = frac_laplacian_apply(k, u)
        assert np.max(np.abs(frac_laplacian_apply_fast(k, u) - ref)) <= 1e-12 * np.max(np.abs(ref))


@pytest.mark.parametrize("n,N", [(1, 64), (2, 15)])
def test_delta_field(n, N):
    g = build_grid(n, 2.0, N)
    k = build_kernel(g, 0.5)
    u = np.zeros(g.shape)
    c = (N // 2,) * n
    u[c] = 1.0
    ref = frac_laplacian_apply(k, u)
    assert np.max(np.abs(frac_laplacian_apply_fast(k, u) - ref)) <= 1e-12 * np.max(np.abs(ref))
    # diagonal entry is c (S_i + T_i), off-diagonal entries are -c K(d)
    assert ref[c] == pytest.approx(k.c_norm * (k.row_sum[c] + k.tail[c]), rel=1e-14)


def test_apply_rejects_grid_mismatch():
    k = build_kernel(build_grid(1, 2.0, 21), 0.5)
    with pytest.raises(ValueError):
        frac_laplacian_apply_fast(k, np.zeros(20))
    with pytest.raises(ValueError):
        gagliardo_energy(k, np.zeros((21, 21)))


def test_workers_do_not_change_result(rng):
    g = build_grid(2, 2.0, 33)
    u = rng.standard_normal(g.shape)
    a = energy_apply(build_kernel(g, 0.5, workers=1), u)
    b = energy_apply(build_kernel(g, 0.5, workers=2), u)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13 * np.max(np.abs(a)))


# --- energy -----------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def kernel_1d():
    return build_kernel(build_grid(1, 2.0, 17), 0.4)


def test_energy_zero(kernel_1d):
    assert gagliardo_energy(kernel_1d, np.zeros(17)) == 0.0


def test_energy_homogeneous(kernel_1d, rng):
    u = rng.standard_normal(17)
    assert gagliardo_energy(kernel_1d, 2 * u) == pytest.approx(4 * gagliardo_energy(kernel_1d, u), rel=1e-14)


@pytest.mark.parametrize("n,N", [(1, 17), (2, 9)])
def test_energy_single_point(n, N):
    g = build_grid(n, 2.0, N)
    k = build_kernel(g, 0.3)
    i = (3,) * n
    v = 1.7
    u = np.zeros(g.shape)
    u[i] = v
    # direct double sum: each pair (i, j) appears twice
    xi = np.array([g.axis[a] for a in i])
    d = np.sqrt(np.sum((g.points - xi) ** 2, axis=1))
    d = d[d > 0]
    hn = g.cell_volume
    expected = 2 * v**2 * hn * (np.sum(hn / d ** (n + 0.6)) + k.tail[i])
    assert gagliardo_energy(k, u) == pytest.approx(expected, rel=1e-13)


def test_energy_matches_bruteforce(kernel_1d, rng):
    for _ in range(5):
        u = rng.standard_normal(17)
        assert gagliardo_energy(kernel_1d, u) == pytest.approx(gagliardo_energy_bruteforce(kernel_1d, u), rel=1e-12)


def test_energy_matches_bruteforce_2d(rng):
    k = build_kernel(build_grid(2, 2.0, 9), 0.7)
    u = rng.standard_normal((9, 9))
    assert gagliardo_energy(k, u) == pytest.approx(gagliardo_energy_bruteforce(k, u), rel=1e-12)


def test_pairing_identities(kernel_1d, rng):
    u, w = rng.standard_normal(17), rng.standard_normal(17)
    assert dirichlet_pairing(kernel_1d, u, u) == pytest.approx(gagliardo_energy(kernel_1d, u), rel=1e-14)
    assert dirichlet_pairing(kernel_1d, u, np.zeros(17)) == 0.0
    assert dirichlet_pairing(kernel_1d, u, w) == pytest.approx(dirichlet_pairing(kernel_1d, w, u), rel=1e-13)
    polar = (gagliardo_energy(kernel_1d, u + w) - gagliardo_energy(kernel_1d, u - w)) / 4
    assert dirichlet_pairing(kernel_1d, u, w) == pytest.approx(polar, rel=1e-12, abs=1e-12)


def test_pairing_against_bruteforce_polarisation(kernel_1d, rng):
    u, w = rng.standard_normal(17), rng.standard_normal(17)
    polar = (gagliardo_energy_bruteforce(kernel_1d, u + w) - gagliardo_energy_bruteforce(kernel_1d, u - w)) / 4
    assert dirichlet_pairing(kernel_1d, u, w) == pytest.approx(polar, rel=1e-11)


@pytest.mark.parametrize("n,N", [(1, 40), (2, 12)])
def test_integration_by_parts(n, N, rng):
    g = build_grid(n, 2.0, N)
    k = build_kernel(g, 0.45)
    for _ in range(5):
        u, v = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        lhs = g.cell_volume * float(np.sum(v * frac_laplacian_apply(k, u)))
        assert lhs == pytest.approx(0.5 * k.c_norm * dirichlet_pairing(k, u, v), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(u=arrays(np.float64, 17, elements=st.one_of(st.just(0.0), st.floats(1e-6, 10), st.floats(-10, -1e-6))))
def test_energy_positive(kernel_1d, u):
    J = gagliardo_energy(kernel_1d, u)
    if np.any(u != 0):
        assert J > 0
    else:
        assert J == 0


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.05, 0.95), N=st.integers(5, 40))
def test_fast_reference_property(alpha, N):
    g = build_grid(1, 1.0, N)
    k = build_kernel(g, alpha)
    u = np.sin(np.arange(N) * 1.3) + 0.5
    ref = energy_apply_reference(k, u)
    assert np.max(np.abs(energy_apply(k, u) - ref)) <= 1e-12 * np.max(np.abs(ref))
