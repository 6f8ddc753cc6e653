"""Local minimization of E on the well {u in S_c : |grad u|_2 < R0}.

The flow is a normalized (projected) gradient descent: each step moves
along the tangent part of the preconditioned gradient, renormalizes the
mass back to c and backtracks on the energy. Directions are combined by
Polak-Ribiere conjugation, restarted whenever conjugation stops giving a
descent direction. The gradient norm is never clamped; leaving the well
raises :class:`WellEscapeError`.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from . import functional as fn
from .params import ModelParams, WellGeometry, derive_geometry, validate_regime
from .spectral import Grid3, mass, support_fraction
from .wp_oracle import ground_profile, v_c_profile

__all__ = [
    "SolverConfig",
    "GroundStateResult",
    "ClaimsReport",
    "MinimizationError",
    "ConvergenceError",
    "WellEscapeError",
    "SupportOverflowError",
    "RegimeError",
    "project_mass",
    "descent_step",
    "minimize",
    "verify_claims",
    "grid_for",
    "sample_vc",
    "random_init",
]

log = logging.getLogger(__name__)


class MinimizationError(RuntimeError):
    def __init__(self, message: str, result: "GroundStateResult | None" = None):
        super().__init__(message)
        self.result = result


class ConvergenceError(MinimizationError):
    pass


class WellEscapeError(MinimizationError):
    pass


class SupportOverflowError(MinimizationError):
    pass


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    step: float = 1.0
    tol_grad: float = 1e-8
    tol_p: float = 1e-8
    max_iter: int = 5000
    well_cap: float | None = None
    backtrack: float = 0.5
    grow: float = 1.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    min_step: float = 1e-12
    conjugate: bool = True
    support_min: float = 0.9999
    check_every: int = 50

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not (self.tol_grad > 0 and self.tol_p > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GroundStateResult:
    field: np.ndarray
    grid: Grid3
    params: ModelParams
    breakdown: fn.EnergyBreakdown
    mu: float
    grad_l2: float
    residual: float
    iterations: int
    converged: bool
    well_ok: bool
    well_cap: float
    R0: float
    init: str = "vc"
    history: list[tuple] = field(default_factory=list, repr=False)

    @property
    def energy(self) -> float:
        return self.breakdown.total

    @property
    def relative_pohozaev(self) -> float:
        return abs(self.breakdown.p_value) / (self.breakdown.grad_sq + 1.0)

    def summary(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "energy": self.breakdown.to_dict(),
            "mu": self.mu,
            "grad_l2": self.grad_l2,
            "residual": self.residual,
            "pohozaev_rel": self.relative_pohozaev,
            "iterations": self.iterations,
            "converged": self.converged,
            "well_ok": self.well_ok,
            "well_cap": self.well_cap,
            "R0": self.R0,
            "init": self.init,
        }

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "E", "P", "mu", "grad_l2", "residual", "step"])
            for row in self.history:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def project_mass(u: np.ndarray, c: float, grid: Grid3) -> np.ndarray:
    m = mass(u, grid)
    if m == 0.0:
        raise ValueError("cannot project the zero field onto S_c")
    return u * (c / m)


def grid_for(geometry: WellGeometry, n: int = 64, box_widths: float | None = None) -> Grid3:
    """Cubic grid scaled to the width of v_c: the box spans ``box_widths``
    units of W_p's own length scale (default 4.1 r_9999 of W_p, so 99.99% of
    the mass sits in the central half box)."""
    d, beta = geometry.delta_p, geometry.beta_c
    rate = math.sqrt(2.0 * d * beta / (1.0 - d))
    if box_widths is None:
        box_widths = 4.1 * mass_radius(geometry.params.p, 0.9999)
    return Grid3.cube(n, box_widths / rate)


def mass_radius(p: float, fraction: float) -> float:
    """Radius of the ball holding ``fraction`` of the mass of W_p."""
    W = ground_profile(p)
    cum = np.cumsum(W.w**2 * W.r**2)
    return float(W.r[np.searchsorted(cum / cum[-1], fraction)])


def sample_vc(geometry: WellGeometry, grid: Grid3, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """v_c sampled on the grid (centered at ``center``), renormalized to mass c."""
    sg = v_c_profile(geometry)
    x1, x2, x3 = grid.coords
    r = np.sqrt((x1 - center[0]) ** 2 + (x2 - center[1]) ** 2 + (x3 - center[2]) ** 2)
    return project_mass(sg.profile.evaluate(r), geometry.params.c, grid)


def random_init(geometry: WellGeometry, grid: Grid3, seed: int = 0) -> np.ndarray:
    """Positive random bump: v_c-width Gaussian with random anisotropy and
    smooth random modulation. Not guaranteed to lie in the well."""
    rng = np.random.default_rng(seed)
    d, beta = geometry.delta_p, geometry.beta_c
    width = 1.5 / math.sqrt(2.0 * d * beta / (1.0 - d))
    x1, x2, x3 = grid.coords
    s = width * rng.uniform(0.7, 1.4, size=3)
    base = np.exp(-(x1**2 / s[0] ** 2 + x2**2 / s[1] ** 2 + x3**2 / s[2] ** 2))
    noise = rng.standard_normal(grid.shape)
    noise = sfft.irfftn(np.exp(-grid.k2_half * width**2) * sfft.rfftn(noise), s=grid.shape)
    noise /= np.max(np.abs(noise))
    return project_mass(base * (1.0 + 0.3 * noise) ** 2, geometry.params.c, grid)


def _precondition(g: np.ndarray, shift: float, grid: Grid3) -> np.ndarray:
    return sfft.irfftn(sfft.rfftn(g) / (shift + 0.5 * grid.k2_half), s=grid.shape)


def _tangent_direction(u, G, shift, grid):
    """-M^{-1}(G + mu_M u) with mu_M making it L2-orthogonal to u."""
    MG = _precondition(G, shift, grid)
    Mu = _precondition(u, shift, grid)
    mu_m = -np.vdot(MG, u).real / np.vdot(Mu, u).real
    return -(MG + mu_m * Mu), G + mu_m * u


def _noise(bd: fn.EnergyBreakdown) -> float:
    return 64 * np.finfo(float).eps * (abs(bd.kinetic) + abs(bd.b_pair) + abs(bd.attractive))


def descent_step(u, mu, step, params, grid, direction=None, state=None, config=SolverConfig()):
    """One projected, backtracked step from ``u`` (assumed on S_c).

    Returns ``(u_new, breakdown, G_new, accepted_step)``. The energy is
    nonincreasing up to a roundoff allowance of a few ulps of the energy
    components. Raises :class:`ConvergenceError` when backtracking underflows.
    """
    c = math.sqrt(state[0].mass_sq) if state is not None else mass(u, grid)
    if state is None:
        bd, G = fn.evaluate(u, grid, params)
    else:
        bd, G = state
    shift = max(bd.mu_est, 1e-300) if mu is None else max(mu, 1e-300)
    if direction is None:
        direction, _ = _tangent_direction(u, G, shift, grid)
    slope = 2.0 * grid.dv * float(np.vdot(G, direction).real)
    if slope >= 0:
        direction, _ = _tangent_direction(u, G, shift, grid)
        slope = 2.0 * grid.dv * float(np.vdot(G, direction).real)
    tau = step
    noise = _noise(bd)
    res = None
    for _ in range(config.max_backtracks):
        trial = project_mass(u + tau * direction, c, grid)
        tbd, tG = fn.evaluate(trial, grid, params)
        if tbd.total <= bd.total + config.armijo * tau * slope:
            return trial, tbd, tG, tau
        if -tau * slope < 4.0 * noise and tbd.total <= bd.total + noise:
            # the predicted decrease is below energy roundoff: judge the step
            # by the Euler-Lagrange residual instead
            if res is None:
                res = _residual_norms(u, G, bd, grid)[1]
            if _residual_norms(trial, tG, tbd, grid)[1] < res:
                return trial, tbd, tG, tau
        tau *= config.backtrack
        if tau < config.min_step:
            break
    raise ConvergenceError(f"backtracking exhausted (step < {config.min_step:g})")


def _residual_norms(u, G, bd, grid):
    mu = bd.mu_est
    r = G + mu * u
    res = math.sqrt(grid.dv * float(np.vdot(r, r).real))
    return mu, res


def minimize(
    params: ModelParams,
    grid: Grid3 | None = None,
    config: SolverConfig = SolverConfig(),
    init: np.ndarray | str | None = None,
    geometry: WellGeometry | None = None,
    seed: int = 0,
    callback=None,
) -> GroundStateResult:
    """Minimize E on S_c inside the well, starting from v_c by default.

    Convergence requires |P(u)| / (|grad u|^2 + 1) < tol_p and
    |R(u, mu)|_2 / |u|_2 < tol_grad.
    """
    geometry = geometry or derive_geometry(params)
    report = validate_regime(params, geometry)
    if not report.ok:
        raise RegimeError("; ".join(report.reasons))
    grid = grid or grid_for(geometry)
    cap = config.well_cap if config.well_cap is not None else geometry.t_cstar
    if cap > geometry.t_cstar:
        raise ValueError("well_cap must not exceed t_cstar")

    kind = "vc"
    if init is None or (isinstance(init, str) and init == "vc"):
        u = sample_vc(geometry, grid)
    elif isinstance(init, str) and init == "random":
        kind = "random"
        u = random_init(geometry, grid, seed)
        log.warning("random initialization: the energy is unbounded below on S_c outside the well")
    else:
        kind = "field"
        u = np.array(init, copy=True)
        if u.shape != grid.shape:
            raise ValueError("init field does not match grid")
    if np.iscomplexobj(u) and not np.any(u.imag):
        u = u.real.copy()
    u = project_mass(u, params.c, grid)

    bd, G = fn.evaluate(u, grid, params)
    history = []
    tau = config.step
    direction = None
    prev_g = None
    prev_pg = None
    converged = False
    it = 0
    mu, res = _residual_norms(u, G, bd, grid)

    def make_result(done: bool) -> GroundStateResult:
        gl2 = math.sqrt(bd.grad_sq)
        return GroundStateResult(
            field=u, grid=grid, params=params, breakdown=bd, mu=mu, grad_l2=gl2, residual=res,
            iterations=it, converged=done, well_ok=bool(gl2 < geometry.R0), well_cap=cap,
            R0=geometry.R0, init=kind, history=history,
        )

    for it in range(config.max_iter + 1):
        mu, res = _residual_norms(u, G, bd, grid)
        gl2 = math.sqrt(bd.grad_sq)
        history.append((it, bd.total, bd.p_value, mu, gl2, res, tau))
        if callback is not None:
            callback(it, u, bd)
        if not gl2 < cap:
            raise WellEscapeError(f"|grad u| = {gl2:.6g} reached the well cap {cap:.6g}", make_result(False))
        rel_p = abs(bd.p_value) / (bd.grad_sq + 1.0)
        rel_r = res / math.sqrt(bd.mass_sq)
        if rel_p < config.tol_p and rel_r < config.tol_grad:
            converged = True
            break
        if it == config.max_iter:
            break
        if it % config.check_every == 0 and support_fraction(u, grid) < config.support_min:
            raise SupportOverflowError("mass leaks out of the central half of the box", make_result(False))

        shift = max(mu, 1e-300)
        pg, tang = _tangent_direction(u, G, shift, grid)
        if config.conjugate and direction is not None and prev_g is not None:
            # Polak-Ribiere+ in the preconditioned metric
            num = float(np.vdot(tang - prev_g, -pg).real)
            den = float(np.vdot(prev_g, -prev_pg).real)
            beta = max(0.0, num / den) if den > 0 else 0.0
            if not beta < 10.0:
                beta = 0.0
            direction = pg + beta * direction
            direction -= (np.vdot(u, direction).real / bd.mass_sq) * u
        else:
            direction = pg
        prev_g, prev_pg = tang, pg
        try:
            u, bd, G, tau = descent_step(u, mu, tau, params, grid, direction, (bd, G), config)
        except ConvergenceError:
            if direction is pg:
                raise ConvergenceError("backtracking exhausted", make_result(False))
            direction = None
            u, bd, G, tau = descent_step(u, mu, config.step, params, grid, None, (bd, G), config)
        tau = min(tau * config.grow, 4.0 * config.step)

    result = make_result(converged)
    if not converged:
        raise ConvergenceError(f"not converged after {config.max_iter} iterations", result)
    if support_fraction(u, grid) < config.support_min:
        raise SupportOverflowError("mass leaks out of the central half of the box", result)
    return result


@dataclass
class Claim:
    name: str
    observed: float
    bound: str
    ok: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClaimsReport:
    claims: list[Claim]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.claims)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "claims": [c.to_dict() for c in self.claims]}


def verify_claims(
    result: GroundStateResult,
    geometry: WellGeometry | None = None,
    params: ModelParams | None = None,
    tol_p: float = 1e-8,
    mass_rtol: float = 1e-10,
) -> ClaimsReport:
    """Check a converged state against the closed-form bounds: energy below
    -kappa c^e, mu and |grad u|^2 windows, P ~ 0, positivity, mass, well."""
    params = params or result.params
    geometry = geometry or derive_geometry(params)
    u, grid = result.field, result.grid
    bd = fn.energy(u, grid, params)
    c = params.c
    claims = []
    m = mass(u, grid)
    claims.append(Claim("mass", m, f"|mass/c - 1| < {mass_rtol:g}", abs(m / c - 1) < mass_rtol))
    bound = geometry.energy_bound()
    if params.scalar:
        claims.append(Claim("energy_upper_bound", bd.total, f"<= {bound:.10g} (1e-6 rel)",
                            bd.total <= bound + 1e-6 * abs(bound)))
    else:
        claims.append(Claim("energy_upper_bound", bd.total, f"< {bound:.10g}", bd.total < bound))
    claims.append(Claim("negative_level", bd.total, "< 0", bd.total < 0))
    if params.scalar:
        m0 = -geometry.kappa * c**geometry.energy_exponent
        rel = abs(bd.total / m0 - 1.0)
        claims.append(Claim("energy_vs_m0", rel, "|E/m0 - 1| < 1e-4", rel < 1e-4))
    lo, hi = geometry.mu_interval()
    claims.append(Claim("mu_interval", bd.mu_est, f"in ({lo:.6g}, {hi:.6g})", lo < bd.mu_est < hi))
    glo, ghi = geometry.grad_sq_interval()
    if params.scalar:
        # v_c attains the lower endpoint; strictness needs B < 0
        ok = glo * (1.0 - 1e-6) <= bd.grad_sq < ghi
        claims.append(Claim("grad_sq_interval", bd.grad_sq, f"in [{glo:.6g}, {ghi:.6g}) (1e-6 rel)", ok))
    else:
        claims.append(Claim("grad_sq_interval", bd.grad_sq, f"in ({glo:.6g}, {ghi:.6g})", glo < bd.grad_sq < ghi))
    rel_p = abs(bd.p_value) / (bd.grad_sq + 1.0)
    claims.append(Claim("pohozaev", rel_p, f"< {tol_p:g}", rel_p < tol_p))
    real = np.real(u)
    peak = float(np.max(np.abs(u)))
    neg = float(np.min(real)) / peak
    claims.append(Claim("positivity", neg, "> -1e-10", neg > -1e-10))
    gl2 = math.sqrt(bd.grad_sq)
    if math.isfinite(geometry.R0):
        claims.append(Claim("inside_well", gl2, f"< R0 = {geometry.R0:.6g}", gl2 < geometry.R0))
    return ClaimsReport(claims)
