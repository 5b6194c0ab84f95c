"""Penalised energy, its gradient, the limit functional and Euler-Lagrange checks.

Discrete penalised energy on a grid with cell volume ``hn``::

    I(u) = J_h(u) + hn * sum g_sigma(u - phi) + f_eps(V(u)),
    V(u) = hn * sum_{x_i outside Omega} h_delta(u_i)

The gradient is the exact gradient of this sum with respect to the vector of
grid values, ``hn * (4 A u + g' + f'(V) h'(u) chi_ext)``.  Dividing by ``hn``
gives the Euler-Lagrange density; its smooth part ``4 A u`` equals
``(4 / c_{n,alpha}) (-Delta)^alpha_h u``.

Sign note: with the positive operator ``(-Delta)^alpha`` a minimiser is a
supersolution where the obstacle is active, so the density vanishes as
``(4/c) (-Delta)^alpha u = -g' - f' h' chi_ext``: the operator is non-negative
in Omega and non-positive outside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fractional import KernelTable, dirichlet_pairing, energy_apply, gagliardo_energy
from .penalty import (
    PenaltyParams,
    f_eps,
    f_eps_prime,
    g_sigma,
    g_sigma_prime,
    h_delta,
    h_delta_prime,
)

STAGES = ("sigma-delta", "delta", "limit")


@dataclass(frozen=True)
class EnergyBreakdown:
    J_value: float
    obstacle_penalty: float
    volume_penalty: float
    total: float
    measured_h_volume: float

    def as_dict(self) -> dict:
        return dict(J=self.J_value, obstacle_penalty=self.obstacle_penalty,
                    volume_penalty=self.volume_penalty, total=self.total,
                    measured_h_volume=self.measured_h_volume)


def _exterior(chi_omega: np.ndarray) -> np.ndarray:
    return 1.0 - np.asarray(chi_omega, dtype=float)


def h_volume(u, chi_omega, delta: float, hn: float) -> float:
    return hn * float(np.sum(_exterior(chi_omega) * h_delta(u, delta)))


def breakdown_from_apply(kernel: KernelTable, u, Au, phi, chi_omega, params: PenaltyParams) -> EnergyBreakdown:
    """Energy terms given a precomputed ``A u`` (saves one apply in the solver)."""
    hn = kernel.grid.cell_volume
    J = 2.0 * hn * float(np.sum(u * Au))
    obs = hn * float(np.sum(g_sigma(u - phi, params.sigma)))
    V = h_volume(u, chi_omega, params.delta, hn)
    vol = float(f_eps(V, params.epsilon, params.gamma))
    return EnergyBreakdown(J, obs, vol, J + obs + vol, V)


def penalized_energy(kernel: KernelTable, u, phi, chi_omega, params: PenaltyParams) -> EnergyBreakdown:
    g = kernel.grid
    u, phi, chi_omega = g.check(u, "u"), g.check(phi, "phi"), g.check(chi_omega, "chi_omega")
    return breakdown_from_apply(kernel, u, energy_apply(kernel, u), phi, chi_omega, params)


def penalized_gradient(kernel: KernelTable, u, phi, chi_omega, params: PenaltyParams) -> np.ndarray:
    g = kernel.grid
    u, phi, chi_omega = g.check(u, "u"), g.check(phi, "phi"), g.check(chi_omega, "chi_omega")
    hn = g.cell_volume
    V = h_volume(u, chi_omega, params.delta, hn)
    dens = (4.0 * energy_apply(kernel, u)
            + g_sigma_prime(u - phi, params.sigma)
            + f_eps_prime(V, params.epsilon, params.gamma) * h_delta_prime(u, params.delta) * _exterior(chi_omega))
    return hn * dens


def positivity_count_volume(u, chi_omega, tau_pos: float, hn: float) -> float:
    return hn * float(np.count_nonzero((np.asarray(u) > tau_pos) & (np.asarray(chi_omega) == 0)))


def limit_energy_J_eps(kernel: KernelTable, u, chi_omega, epsilon: float, gamma: float, tau_pos: float) -> float:
    if tau_pos < 0:
        raise ValueError("tau_pos must be non-negative")
    g = kernel.grid
    u, chi_omega = g.check(u, "u"), g.check(chi_omega, "chi_omega")
    vol = positivity_count_volume(u, chi_omega, tau_pos, g.cell_volume)
    return gagliardo_energy(kernel, u) + float(f_eps(vol, epsilon, gamma))


# --- stationarity --------------------------------------------------------------


@dataclass(frozen=True)
class Stationarity:
    """Projected Euler-Lagrange density at a point of the cone ``u >= 0``.

    ``smooth`` is ``4 A u + g'``; ``slope`` holds the right derivative of
    ``h_delta`` on exterior cells.  ``mu`` is the selected element of the
    subdifferential of ``f_eps`` (a single slope away from the kink, the
    minimal-norm choice in ``[eps, 1/eps]`` on it).
    """

    residual: np.ndarray
    smooth: np.ndarray
    slope: np.ndarray
    mu: float
    volume: float
    on_kink: bool

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def _project(e: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.where(u > 0.0, e, np.minimum(e, 0.0))


def _min_norm_mu(smooth, slope, u, lo, hi) -> float:
    act = slope != 0.0
    s, a, uu = smooth[act], slope[act], u[act]
    if s.size == 0:
        return lo

    def dq(mu):  # derivative of the (convex) squared residual norm
        return float(np.sum(a * _project(s + mu * a, uu)))

    if dq(lo) >= 0.0:
        return lo
    if dq(hi) <= 0.0:
        return hi
    a_, b_ = lo, hi
    for _ in range(200):
        m = 0.5 * (a_ + b_)
        if dq(m) > 0.0:
            b_ = m
        else:
            a_ = m
        if b_ - a_ <= 1e-15 * b_:
            break
    return 0.5 * (a_ + b_)


def stationarity(kernel: KernelTable, u, phi, chi_omega, params: PenaltyParams, *, Au=None,
                 kink_band: float = 0.0) -> Stationarity:
    """Residual of the first-order conditions of ``I`` restricted to ``u >= 0``.

    Minimisers are non-negative, so on cells with ``u_i = 0`` only an
    increase is admissible and the right derivative of ``h_delta`` applies.
    When ``|V - gamma| <= kink_band`` the multiplier is chosen in
    ``[eps, 1/eps]`` to minimise the residual norm.
    """
    hn = kernel.grid.cell_volume
    if Au is None:
        Au = energy_apply(kernel, u)
    ext = _exterior(chi_omega)
    smooth = 4.0 * Au + g_sigma_prime(u - phi, params.sigma)
    slope = ext * np.where((u >= 0.0) & (u < params.delta), 1.0 / params.delta, 0.0)
    V = h_volume(u, chi_omega, params.delta, hn)
    eps = params.epsilon
    on_kink = abs(V - params.gamma) <= kink_band
    if on_kink:
        mu = _min_norm_mu(smooth, slope, u, eps, 1.0 / eps)
    else:
        mu = float(f_eps_prime(V, eps, params.gamma))
    r = _project(smooth + mu * slope, u)
    return Stationarity(r, smooth, slope, mu, V, on_kink)


# --- Euler-Lagrange residual reports ----------------------------------------------


@dataclass(frozen=True)
class ResidualReport:
    """Sup-norm violations per region.

    ``omega``: inside Omega; ``positive_exterior``: on the exterior positivity
    set; ``zero_exterior``: on the rest of the complement (for the limit stage,
    the whole complement).  ``monitored`` holds non-asserted quantities.
    """

    stage: str
    omega: float
    positive_exterior: float
    zero_exterior: float
    monitored: dict = field(default_factory=dict)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.omega, self.positive_exterior, self.zero_exterior)

    def as_dict(self) -> dict:
        return dict(stage=self.stage, omega=self.omega, positive_exterior=self.positive_exterior,
                    zero_exterior=self.zero_exterior, **{f"monitored_{k}": v for k, v in self.monitored.items()})


def _sup(x: np.ndarray, mask: np.ndarray) -> float:
    return float(np.max(x[mask])) if np.any(mask) else 0.0


def interior_mask(mask: np.ndarray) -> np.ndarray:
    """Cells of ``mask`` whose axis neighbours all lie in ``mask`` (one-cell erosion)."""
    out = mask.copy()
    for ax in range(mask.ndim):
        for shift in (1, -1):
            nb = np.roll(mask, shift, axis=ax)
            edge = [slice(None)] * mask.ndim
            edge[ax] = 0 if shift == 1 else -1
            nb[tuple(edge)] = False
            out &= nb
    return out


def el_residual(kernel: KernelTable, u, phi, chi_omega, params: PenaltyParams, stage: str, *,
                tol: float = 1e-4, tau_pos: float | None = None, kink_band: float | None = None) -> ResidualReport:
    """Region-wise Euler-Lagrange violations for a solver stage.

    ``"sigma-delta"`` and ``"delta"`` residuals are in Euler-Lagrange density
    units (gradient per unit volume); ``"limit"`` residuals are in units of
    ``(-Delta)^alpha_h u``.  ``tol`` is the contact band: cells with
    ``u <= phi + tol`` in Omega count as contact.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    g = kernel.grid
    u, phi, chi_omega = g.check(u, "u"), g.check(phi, "phi"), g.check(chi_omega, "chi_omega")
    if tau_pos is None:
        tau_pos = 1e-8 * max(float(np.max(phi)), 1.0)
    if kink_band is None:
        kink_band = 1e-10 * max(params.gamma, g.cell_volume)
    Au = energy_apply(kernel, u)
    inside = chi_omega > 0
    outside = ~inside
    pos_ext = outside & (u > tau_pos)
    zero_ext = outside & ~pos_ext
    contact = inside & (u <= phi + tol)
    free = inside & ~contact

    if stage in ("sigma-delta", "delta"):
        st = stationarity(kernel, u, phi, chi_omega, params, Au=Au, kink_band=kink_band)
        if stage == "sigma-delta":
            r = np.abs(st.residual)
            return ResidualReport(stage, _sup(r, inside), _sup(r, pos_ext), _sup(r, zero_ext),
                                  {"mu": st.mu})
        # obstacle as a hard constraint: equality off contact, one-sided on it
        e = 4.0 * Au + st.mu * st.slope
        r_omega = max(_sup(np.abs(e), free), _sup(np.maximum(-e, 0.0), contact))
        r = np.abs(_project(e, u))
        return ResidualReport(stage, r_omega, _sup(r, pos_ext), _sup(r, zero_ext),
                              {"mu": st.mu, "contact_max_density": _sup(e, contact),
                               "contact_min_density": -_sup(-e, contact)})

    L = kernel.c_norm * Au
    r_omega = max(_sup(np.abs(L), free), _sup(np.maximum(-L, 0.0), contact))
    r_pos = _sup(np.abs(L), interior_mask(pos_ext))
    r_ext = _sup(np.maximum(L, 0.0), outside)
    return ResidualReport(stage, r_omega, r_pos, r_ext,
                          {"fringe_max_abs": _sup(np.abs(L), pos_ext & ~interior_mask(pos_ext))})


def variational_inequality_check(kernel: KernelTable, u_de, w, phi, chi_omega, params: PenaltyParams,
                                 kink_band: float | None = None) -> float:
    """Discrete left-hand side of the variational inequality for test field ``w >= phi``::

        2 J(w) - 2 B(w, u) + f'(V(u); dV) * dV,    dV = hn * sum_ext h'(u) (w - u)

    Off the kink ``V = gamma`` the slope is ``f'(V)``.  On it (``|V - gamma| <=
    kink_band``) ``f`` is not differentiable and minimality only controls the
    one-sided derivative along ``w - u``: slope ``1/eps`` when the volume grows,
    ``eps`` otherwise.
    """
    g = kernel.grid
    u, w, phi, chi_omega = (g.check(u_de, "u"), g.check(w, "w"), g.check(phi, "phi"),
                            g.check(chi_omega, "chi_omega"))
    if np.any(w < phi):
        raise ValueError("test field must satisfy w >= phi")
    hn = g.cell_volume
    if kink_band is None:
        kink_band = 1e-10 * max(params.gamma, hn)
    V = h_volume(u, chi_omega, params.delta, hn)
    dV = hn * float(np.sum(_exterior(chi_omega) * h_delta_prime(u, params.delta) * (w - u)))
    if abs(V - params.gamma) <= kink_band:
        fp = 1.0 / params.epsilon if dV > 0 else params.epsilon
    else:
        fp = float(f_eps_prime(V, params.epsilon, params.gamma))
    vol_term = fp * dV
    return 2.0 * gagliardo_energy(kernel, w) - 2.0 * dirichlet_pairing(kernel, w, u) + vol_term
