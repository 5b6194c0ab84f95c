"""Discrete fractional Laplacian and Gagliardo energy on a truncated grid.

Conventions (``K(d) = h^n / |d|^(n+2 alpha)`` for grid offsets ``d != 0``):

* energy apply   ``(A u)_i = sum_{j != i} K(x_i - x_j) (u_i - u_j) + T_i u_i``
* operator       ``(-Delta)^alpha_h u = c_{n,alpha} A u``
* energy         ``J_h(u) = 2 h^n <u, A u>``, hence ``grad J_h = 4 h^n A u``

``T_i`` is the integral of ``|x_i - y|^(-n-2 alpha)`` over the complement of the
union of grid cells, ``[-L - h/2, L + h/2]^n``; the field is zero there.  With
these conventions ``h^n <v, (-Delta)^alpha_h u> = (c/2) B_h(u, v)`` where
``B_h`` is the polarisation of ``J_h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy import integrate, special

from .grid import GridSpec


@dataclass(frozen=True)
class FracParams:
    alpha: float
    c_norm: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.c_norm > 0:
            raise ValueError("c_norm must be positive")


def normalization_constant(n: int, alpha: float) -> float:
    """``c_{n,alpha} = 4^alpha Gamma(n/2 + alpha) / (pi^(n/2) |Gamma(-alpha)|)``.

    This is the constant for which the Fourier symbol of the operator is
    ``|xi|^(2 alpha)``.
    """
    if n not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return float(4.0**alpha * special.gamma(n / 2 + alpha) / (np.pi ** (n / 2) * abs(special.gamma(-alpha))))


# --- far-field tail ----------------------------------------------------------


def _cos_power_integral(theta: np.ndarray, p: float) -> np.ndarray:
    """``int_0^theta cos(t)^p dt`` for ``theta`` in ``[0, pi/2)`` via the incomplete beta."""
    a, b = 0.5, 0.5 * (p + 1.0)
    return 0.5 * special.beta(a, b) * special.betainc(a, b, np.sin(theta) ** 2)


def tail_coefficients(grid: GridSpec, alpha: float) -> np.ndarray:
    """Closed-form ``T_i = int_{outside} |x_i - y|^(-n-2 alpha) dy`` (no ``c_{n,alpha}``)."""
    p = 2.0 * alpha
    b = grid.L + 0.5 * grid.h
    if grid.n == 1:
        x = grid.axis
        return ((b - x) ** -p + (b + x) ** -p) / p
    x, y = grid.coords
    # distance to the right, top, left and bottom sides of the cell box
    dists = [b - x, b - y, b + x, b + y]
    total = np.zeros(grid.shape)
    for k in range(4):
        a = dists[k]
        s1, s2 = dists[(k + 1) % 4], dists[(k + 3) % 4]
        total += a**-p * (_cos_power_integral(np.arctan(s1 / a), p) + _cos_power_integral(np.arctan(s2 / a), p))
    return total / p


def tail_coefficients_quadrature(grid: GridSpec, alpha: float, points=None) -> np.ndarray:
    """Angular quadrature of the tail, used as an independent check.

    ``T = 1/(2 alpha) * int_0^{2 pi} rho(theta)^(-2 alpha) d theta`` with ``rho``
    the exit distance from the cell box along direction ``theta``.
    """
    p = 2.0 * alpha
    b = grid.L + 0.5 * grid.h
    if grid.n == 1:
        # two "directions"; integrate the radial part numerically
        x = grid.axis if points is None else np.asarray(points, dtype=float)
        f = lambda r: r ** (-1.0 - p)
        out = [integrate.quad(f, b - xi, np.inf, epsabs=0, epsrel=1e-13)[0]
               + integrate.quad(f, b + xi, np.inf, epsabs=0, epsrel=1e-13)[0] for xi in x]
        return np.array(out)
    pts = grid.points if points is None else np.atleast_2d(points)
    out = []
    for px, py in pts:
        def exit_dist(th):
            c, s = np.cos(th), np.sin(th)
            tx = (b - px) / c if c > 0 else ((-b - px) / c if c < 0 else np.inf)
            ty = (b - py) / s if s > 0 else ((-b - py) / s if s < 0 else np.inf)
            return min(tx, ty)

        corners = sorted(np.mod(np.arctan2(cy - py, cx - px), 2 * np.pi)
                         for cx in (-b, b) for cy in (-b, b))
        brk = [0.0, *corners, 2 * np.pi]
        val = sum(integrate.quad(lambda t: exit_dist(t) ** -p, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
                  for lo, hi in zip(brk[:-1], brk[1:]) if hi > lo)
        out.append(val / p)
    return np.array(out).reshape(grid.shape if points is None else (-1,))


# --- kernel table -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Precomputed weights for one grid and one ``alpha``.

    ``weights`` is indexed by offset: ``weights[k + N - 1]`` (per axis) holds
    ``K(k h)``, with the zero offset set to 0.
    """

    grid: GridSpec
    frac: FracParams
    weights: np.ndarray
    row_sum: np.ndarray
    tail: np.ndarray
    workers: int = 1
    _fft_shape: tuple[int, ...] = field(default=(), repr=False)
    _weights_fft: np.ndarray = field(default=None, repr=False)

    @property
    def alpha(self) -> float:
        return self.frac.alpha

    @property
    def c_norm(self) -> float:
        return self.frac.c_norm

    @property
    def has_tail(self) -> bool:
        return bool(np.any(self.tail))


def _offset_weights(grid: GridSpec, alpha: float) -> np.ndarray:
    k = np.arange(-(grid.N - 1), grid.N, dtype=float)
    if grid.n == 1:
        r = np.abs(k) * grid.h
    else:
        kx, ky = np.meshgrid(k, k, indexing="ij")
        r = np.hypot(kx, ky) * grid.h
    with np.errstate(divide="ignore"):
        w = grid.cell_volume / r ** (grid.n + 2.0 * alpha)
    w[(grid.N - 1,) * grid.n] = 0.0
    return w


def _row_sums(grid: GridSpec, weights: np.ndarray) -> np.ndarray:
    # S_i = sum of weights over offsets i - j, j in the grid: a box sum of the table
    N = grid.N
    if grid.n == 1:
        c = np.concatenate([[0.0], np.cumsum(weights)])
        i = np.arange(N)
        # offsets i - j for j in [0, N): table indices N-1+i-(N-1) .. N-1+i
        return c[i + N] - c[i]
    c = np.zeros((2 * N, 2 * N))
    c[1:, 1:] = weights.cumsum(0).cumsum(1)
    i = np.arange(N)
    lo, hi = i, i + N
    return c[hi][:, hi] - c[lo][:, hi] - c[hi][:, lo] + c[lo][:, lo]


def build_kernel(grid: GridSpec, alpha: float, *, tail: bool = True, c_norm: float | None = None,
                 workers: int = 1) -> KernelTable:
    """Precompute the weight table, row sums, tail and the FFT of the weights.

    ``tail=False`` drops the far-field term (the field is then treated as if
    the grid covered all of space).  ``c_norm`` overrides the normalisation
    constant; it exists for fault-injection tests.
    """
    c = normalization_constant(grid.n, alpha) if c_norm is None else float(c_norm)
    frac = FracParams(float(alpha), c)
    w = _offset_weights(grid, alpha)
    S = _row_sums(grid, w)
    T = tail_coefficients(grid, alpha) if tail else np.zeros(grid.shape)
    fshape = tuple(scipy.fft.next_fast_len(2 * grid.N - 1, real=True) for _ in range(grid.n))
    wf = scipy.fft.rfftn(w, s=fshape, workers=workers)
    return KernelTable(grid, frac, w, S, T, workers, fshape, wf)


def _convolve(kernel: KernelTable, u: np.ndarray) -> np.ndarray:
    """``sum_{j} K(x_i - x_j) u_j`` via zero-padded FFT."""
    N = kernel.grid.N
    uf = scipy.fft.rfftn(u, s=kernel._fft_shape, workers=kernel.workers)
    full = scipy.fft.irfftn(uf * kernel._weights_fft, s=kernel._fft_shape, workers=kernel.workers)
    sl = (slice(N - 1, 2 * N - 1),) * kernel.grid.n
    return full[sl]


def energy_apply(kernel: KernelTable, u: np.ndarray) -> np.ndarray:
    """``A u`` (fast path); the operator without ``c_{n,alpha}``."""
    u = kernel.grid.check(u)
    return (kernel.row_sum + kernel.tail) * u - _convolve(kernel, u)


def energy_apply_reference(kernel: KernelTable, u: np.ndarray, chunk: int = 256) -> np.ndarray:
    """``A u`` by direct double summation over all grid pairs."""
    grid = kernel.grid
    u = grid.check(u)
    N = grid.N
    flat = u.ravel()
    idx = np.indices(grid.shape).reshape(grid.n, -1)
    out = np.empty(grid.size)
    for start in range(0, grid.size, chunk):
        rows = slice(start, min(start + chunk, grid.size))
        off = tuple(idx[a, rows, None] - idx[a, None, :] + (N - 1) for a in range(grid.n))
        w = kernel.weights[off]
        out[rows] = np.sum(w * (flat[rows, None] - flat[None, :]), axis=1)
    return out.reshape(grid.shape) + kernel.tail * u


def frac_laplacian_apply(kernel: KernelTable, u: np.ndarray) -> np.ndarray:
    """Reference ``(-Delta)^alpha_h u``: ``O(N^(2n))`` direct sum."""
    return kernel.c_norm * energy_apply_reference(kernel, u)


def frac_laplacian_apply_fast(kernel: KernelTable, u: np.ndarray) -> np.ndarray:
    """``(-Delta)^alpha_h u`` through the convolution structure, ``O(N^n log N)``."""
    return kernel.c_norm * energy_apply(kernel, u)


def gagliardo_energy(kernel: KernelTable, u: np.ndarray) -> float:
    u = kernel.grid.check(u)
    return 2.0 * kernel.grid.cell_volume * float(np.sum(u * energy_apply(kernel, u)))


def dirichlet_pairing(kernel: KernelTable, u: np.ndarray, w: np.ndarray) -> float:
    """Symmetric bilinear form with ``B(u, u) = J_h(u)``."""
    u = kernel.grid.check(u, "u")
    w = kernel.grid.check(w, "w")
    hn = kernel.grid.cell_volume
    return hn * float(np.sum(w * energy_apply(kernel, u)) + np.sum(u * energy_apply(kernel, w)))


def gagliardo_energy_bruteforce(kernel: KernelTable, u: np.ndarray) -> float:
    """Double loop over pairs plus the tail, without the apply machinery."""
    grid = kernel.grid
    u = grid.check(u)
    pts = grid.points
    flat = u.ravel()
    hn = grid.cell_volume
    p = grid.n + 2.0 * kernel.alpha
    total = 0.0
    for i in range(grid.size):
        d = np.sqrt(np.sum((pts - pts[i]) ** 2, axis=1))
        d[i] = np.inf
        total += np.sum(hn / d**p * (flat[i] - flat) ** 2) * hn
    return float(total + 2.0 * hn * np.sum(kernel.tail.ravel() * flat**2))


# --- analytic oracles -----------------------------------------------------------


def symbol_integral(n: int, alpha: float) -> float:
    """``int_{R^n} (1 - cos(y_1)) / |y|^(n + 2 alpha) dy`` by quadrature (``= 1/c_{n,alpha}``)."""
    p = 1.0 + 2.0 * alpha
    if n == 1:
        # split at 1: near zero (1 - cos y) / y^2 is smooth and y^(1 - 2 alpha) is an
        # algebraic weight; the far part is closed form minus a cosine-weighted integral
        smooth = lambda y: 0.5 * np.sinc(y / (2 * np.pi)) ** 2
        near = integrate.quad(smooth, 0, 1, weight="alg", wvar=(1.0 - 2.0 * alpha, 0.0), epsabs=0, epsrel=1e-13)[0]
        # int_1^inf cos(y) y^-p dy, integrated by parts twice so the remainder decays fast
        q, Y = p + 2.0, 2000.0 * np.pi
        rest = integrate.quad(lambda y: y**-q, 1, Y, weight="cos", wvar=1.0, epsabs=1e-13, epsrel=1e-11, limit=4000)[0]
        rest += -np.sin(Y) * Y**-q + q * np.cos(Y) * Y ** (-q - 1.0)
        far_b = -np.sin(1.0) + p * np.cos(1.0) - p * (p + 1.0) * rest
        return 2.0 * (near + 1.0 / (2.0 * alpha) - far_b)
    # polar: int_0^{2pi} int_0^inf (1 - cos(r cos t)) r^(-1-2a) dr dt
    #      = int_0^{2pi} |cos t|^(2a) dt * int_0^inf (1 - cos s) s^(-1-2a) ds
    radial = symbol_integral(1, alpha) / 2.0
    # four equal quarters; cos t / (pi/2 - t) is smooth and the zero at pi/2 becomes a weight
    ratio = lambda t: (np.cos(t) / (0.5 * np.pi - t)) ** (2 * alpha) if t < 0.5 * np.pi else 1.0
    angular = 4.0 * integrate.quad(ratio, 0, 0.5 * np.pi, weight="alg", wvar=(0.0, 2 * alpha),
                                   epsabs=0, epsrel=1e-13)[0]
    return radial * angular


def profile_constant(alpha: float, n: int = 1) -> float:
    """Exact value of ``(-Delta)^alpha (1 - |x|^2)_+^alpha`` inside the unit ball of ``R^n``."""
    return float(4.0**alpha * special.gamma(1.0 + alpha) * special.gamma(0.5 * n + alpha) / special.gamma(0.5 * n))


def profile_pv_quadrature(x: float, alpha: float, epsrel: float = 1e-11) -> float:
    """Adaptive quadrature of ``c PV int (u(x) - u(y)) |x-y|^(-1-2 alpha) dy`` for ``u = (1-y^2)_+^alpha``.

    On ``z < 1 - |x|`` the symmetrised numerator ``2u(x) - u(x+z) - u(x-z)``
    is evaluated through ``expm1``/``log1p`` so it keeps its digits as
    ``z -> 0``; near zero the numerator divided by ``z^2`` is smooth and the
    remaining ``z^(1 - 2 alpha)`` is passed to quad as an algebraic weight.
    """
    if not abs(x) < 1.0:
        raise ValueError("x must lie inside (-1, 1)")
    c = normalization_constant(1, alpha)
    u = lambda y: np.maximum(1.0 - y * y, 0.0) ** alpha
    p = 1.0 + 2.0 * alpha
    s = 1.0 - x * x
    ux = s**alpha
    a, b = 1.0 - abs(x), 1.0 + abs(x)

    def numerator(z):
        dp, dm = (-2.0 * x * z - z * z) / s, (2.0 * x * z - z * z) / s
        return -ux * (np.expm1(alpha * np.log1p(dp)) + np.expm1(alpha * np.log1p(dm)))

    far = lambda z: (2.0 * ux - u(x + z) - u(x - z)) / z**p
    # limit of the numerator over z^2 at z = 0 is -u''(x)
    u2 = -2.0 * alpha * s ** (alpha - 1.0) + 4.0 * alpha * (alpha - 1.0) * x * x * s ** (alpha - 2.0)
    smooth = lambda z: numerator(z) / (z * z) if z > 0 else -u2
    body = integrate.quad(smooth, 0.0, 0.5 * a, weight="alg",
                          wvar=(1.0 - 2.0 * alpha, 0.0), epsabs=0, epsrel=epsrel, limit=400)[0]
    body += integrate.quad(lambda z: numerator(z) / z**p, 0.5 * a, a, epsabs=0, epsrel=epsrel, limit=400)[0]
    body += integrate.quad(far, a, b, epsabs=0, epsrel=epsrel, limit=400)[0]
    tail = 2.0 * ux * b ** (-2.0 * alpha) / (2.0 * alpha)
    return c * (body + tail)
