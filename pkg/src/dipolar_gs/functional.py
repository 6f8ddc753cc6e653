"""Energy functional and its companions on a periodic grid.

    E(u) = 1/2 |grad u|^2 + 1/2 B(u) + (2 lambda3/p) |u|_p^p
    B(u) = int lambda1 |u|^4 + lambda2 (K * |u|^2) |u|^2
    P(u) = 2 |grad u|^2 + 3 B(u) + 4 lambda3 delta_p |u|_p^p

The Euler-Lagrange residual uses the stationary-equation normalization

    R(u, mu) = -1/2 Delta u + lambda1 |u|^2 u + lambda2 (K * |u|^2) u + lambda3 |u|^{p-2} u + mu u,

so that dE(u)[phi] = 2 Re <R(u, 0), phi>.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.fft as sfft

from .params import ModelParams
from .spectral import Grid3, density_potential, laplacian_apply

__all__ = [
    "EnergyBreakdown",
    "b_pair_direct",
    "b_pair_fourier",
    "energy",
    "pohozaev",
    "fiber_map",
    "multiplier_estimate",
    "el_residual",
    "evaluate",
]


def _delta(p: float) -> float:
    return 3.0 * (p - 2.0) / (2.0 * p)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    b_pair: float
    attractive: float
    total: float
    p_value: float
    mu_est: float
    grad_sq: float
    B: float
    lpp: float
    mass_sq: float

    def to_dict(self) -> dict:
        return asdict(self)


def b_pair_direct(u: np.ndarray, grid: Grid3, params: ModelParams) -> float:
    """B(u) as a real-space integral of lambda1 rho^2 + lambda2 (K * rho) rho."""
    rho = np.abs(u) ** 2
    phi = density_potential(rho, grid)
    return grid.dv * float(np.sum(params.lambda1 * rho**2 + params.lambda2 * phi * rho))


def b_pair_fourier(u: np.ndarray, grid: Grid3, params: ModelParams) -> float:
    """B(u) = (2 pi)^-3 int (lambda1 + lambda2 khat) |rho^|^2 dxi as a lattice sum.

    With rho^(xi_m) ~ h^3 FFT(rho)_m and dxi = (2 pi)^3 / V, the continuum
    integral becomes (dv / N) sum_m (lambda1 + lambda2 khat_m) |FFT(rho)_m|^2.
    """
    rho_hat = sfft.fftn(np.abs(u) ** 2)
    mult = params.lambda1 + params.lambda2 * grid.khat
    return grid.dv / grid.size * float(np.sum(mult * np.abs(rho_hat) ** 2))


def _parts(u, grid, params, lap=None, phi=None):
    rho = np.abs(u) ** 2
    if lap is None:
        lap = laplacian_apply(u, grid)
    if phi is None:
        phi = density_potential(rho, grid)
    dv = grid.dv
    grad_sq = -dv * float(np.vdot(u, lap).real)
    B = dv * float(np.sum(params.lambda1 * rho**2 + params.lambda2 * phi * rho))
    lpp = dv * float(np.sum(rho ** (params.p / 2)))
    mass_sq = dv * float(np.sum(rho))
    return grad_sq, B, lpp, mass_sq, rho, lap, phi


def _breakdown(grad_sq, B, lpp, mass_sq, params) -> EnergyBreakdown:
    p, lam3 = params.p, params.lambda3
    kinetic = 0.5 * grad_sq
    attractive = 2.0 * lam3 / p * lpp
    total = kinetic + 0.5 * B + attractive
    pv = 2.0 * grad_sq + 3.0 * B + 4.0 * lam3 * _delta(p) * lpp
    mu = -(0.5 * grad_sq + B + lam3 * lpp) / mass_sq if mass_sq > 0 else 0.0
    return EnergyBreakdown(
        kinetic=kinetic, b_pair=0.5 * B, attractive=attractive, total=total,
        p_value=pv, mu_est=mu, grad_sq=grad_sq, B=B, lpp=lpp, mass_sq=mass_sq,
    )


def energy(u: np.ndarray, grid: Grid3, params: ModelParams) -> EnergyBreakdown:
    grad_sq, B, lpp, mass_sq, *_ = _parts(u, grid, params)
    return _breakdown(grad_sq, B, lpp, mass_sq, params)


def pohozaev(u: np.ndarray, grid: Grid3, params: ModelParams) -> float:
    return energy(u, grid, params).p_value


def fiber_map(parts: EnergyBreakdown, s: float, params: ModelParams) -> tuple[float, float]:
    """Psi_u(s) = E(u_s) and its derivative for the dilation u_s = s^{3/2} u(s x),
    evaluated algebraically from the components of u."""
    if not s > 0:
        raise ValueError("dilation s must be positive")
    p, a3 = params.p, abs(params.lambda3)
    pd = p * _delta(p)
    psi = 0.5 * s**2 * parts.grad_sq + 0.5 * s**3 * parts.B - 2.0 * a3 * s**pd / p * parts.lpp
    dpsi = s * parts.grad_sq + 1.5 * s**2 * parts.B - 2.0 * a3 * _delta(p) * s ** (pd - 1.0) * parts.lpp
    return psi, dpsi


def multiplier_estimate(u: np.ndarray, grid: Grid3, params: ModelParams) -> float:
    """mu = -[1/2 |grad u|^2 + B(u) + lambda3 |u|_p^p] / |u|_2^2 (pairing the
    stationary equation with u)."""
    return energy(u, grid, params).mu_est


def _gradient_field(u, rho, lap, phi, params):
    p = params.p
    pot = params.lambda1 * rho + params.lambda2 * phi
    if p != 2.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            nl = np.where(rho > 0, rho ** ((p - 2) / 2), 0.0)
        pot = pot + params.lambda3 * nl
    return -0.5 * lap + pot * u


def el_residual(u: np.ndarray, mu: float, grid: Grid3, params: ModelParams) -> np.ndarray:
    """-1/2 Delta u + lambda1|u|^2 u + lambda2 (K*|u|^2) u + lambda3 |u|^{p-2} u + mu u."""
    _, _, _, _, rho, lap, phi = _parts(u, grid, params)
    return _gradient_field(u, rho, lap, phi, params) + mu * u


def evaluate(u: np.ndarray, grid: Grid3, params: ModelParams) -> tuple[EnergyBreakdown, np.ndarray]:
    """Breakdown and R(u, 0) sharing one Laplacian and one dipolar transform."""
    grad_sq, B, lpp, mass_sq, rho, lap, phi = _parts(u, grid, params)
    return _breakdown(grad_sq, B, lpp, mass_sq, params), _gradient_field(u, rho, lap, phi, params)


def residual_norm(u: np.ndarray, mu: float, grid: Grid3, params: ModelParams) -> float:
    r = el_residual(u, mu, grid, params)
    return math.sqrt(grid.dv * float(np.vdot(r, r).real))
