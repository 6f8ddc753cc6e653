"""Verification campaigns: small-mass asymptotics and orbital stability.

The sweep solves for the rescaled profile directly. Writing a ground state as
u(y) = a v(b y) with a = [2 beta_c / (p (1-delta) |lam3|)]^{1/(p-2)} and
b = sqrt(2 delta beta_c / (1-delta)), v minimizes the same functional with

    lambda1, lambda2 -> eps lambda1, eps lambda2     (eps = a^2 / b^2)
    lambda3          -> -1 / (p delta)
    c                -> |W_p|_2

and E(u) = (a^2/b) E~(v), mu(u) = b^2 mu~(v). For lambda1 = lambda2 = 0 the
rescaled minimizer is W_p itself, so every grid in the sweep has the same
resolution relative to the profile.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import optimize

from . import functional as fn
from .minimizer import (
    GroundStateResult,
    MinimizationError,
    SolverConfig,
    grid_for,
    minimize,
    project_mass,
)
from .params import ModelParams, WellGeometry, derive_geometry
from .spectral import Grid3, density_potential, mass, write_snapshot
from .wp_oracle import ground_profile, radial_norms

__all__ = [
    "SweepRecord",
    "EvolutionStats",
    "StabilityTrial",
    "StabilityReport",
    "BlowUpError",
    "limit_constants",
    "rescaling",
    "rescaled_params",
    "asymptotic_sweep",
    "sweep_point",
    "fit_slope",
    "sweep_summary",
    "rescale_to_limit",
    "recenter",
    "h1_norm",
    "orbit_distance",
    "reflection_defect",
    "splitstep_evolve",
    "band_limited_perturbation",
    "stability_probe",
    "write_sweep_csv",
]

log = logging.getLogger(__name__)


def limit_constants(p: float, lambda3: float, kappa: float) -> dict[str, float]:
    """Small-mass limits of the five normalized quantities."""
    d = 3.0 * (p - 2.0) / (2.0 * p)
    e = 2.0 - p * d
    return {
        "energy_ratio": -kappa,
        "mu_ratio": p * (1.0 - d) * kappa / e,
        "b_ratio": 0.0,
        "grad_ratio": 2.0 * p * d * kappa / e,
        "lp_ratio": p * kappa / (e * abs(lambda3)),
    }


def rescaling(geometry: WellGeometry) -> tuple[float, float]:
    """(a, b) with u(y) = a v(b y)."""
    p, d, beta = geometry.params.p, geometry.delta_p, geometry.beta_c
    a = (2.0 * beta / (p * (1.0 - d) * abs(geometry.params.lambda3))) ** (1.0 / (p - 2.0))
    b = math.sqrt(2.0 * d * beta / (1.0 - d))
    return a, b


def rescaled_params(params: ModelParams, geometry: WellGeometry | None = None) -> ModelParams:
    geometry = geometry or derive_geometry(params)
    a, b = rescaling(geometry)
    eps = a * a / (b * b)
    p, d = params.p, geometry.delta_p
    mass_w = radial_norms(ground_profile(p), p)["mass"]
    return ModelParams(eps * params.lambda1, eps * params.lambda2, -1.0 / (p * d), p, mass_w)


@dataclass
class SweepRecord:
    c: float
    energy_ratio: float
    mu_ratio: float
    b_ratio: float
    grad_ratio: float
    lp_ratio: float
    h1_dist_to_Wp: float
    h1_rel: float
    eps: float
    converged: bool = True
    iterations: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _failed_record(c: float, eps: float, err: Exception) -> SweepRecord:
    nan = math.nan
    return SweepRecord(c, nan, nan, nan, nan, nan, nan, nan, eps, converged=False, error=str(err))


def sample_wp(grid: Grid3, p: float) -> np.ndarray:
    return ground_profile(p).evaluate(grid.radius)


def h1_norm(f: np.ndarray, grid: Grid3) -> float:
    fh = sfft.fftn(f)
    return math.sqrt(grid.dv / grid.size * float(np.sum((1.0 + grid.k2) * np.abs(fh) ** 2)))


def sweep_point(template: ModelParams, c: float, n: int = 64,
                config: SolverConfig = SolverConfig(), rescaled: bool = True) -> SweepRecord:
    """Ground state at mass ``c`` and its normalized ratios. A failed
    minimization gives a record with ``converged=False``."""
    params = template.with_mass(c)
    geometry = derive_geometry(params)
    if c > geometry.c_star * (1.0 + 1e-13):
        raise ValueError(f"mass {c} above c_star = {geometry.c_star}")
    a, b = rescaling(geometry)
    eps = a * a / (b * b)
    try:
        if rescaled:
            rp = rescaled_params(params, geometry)
            res = minimize(rp, grid=grid_for(derive_geometry(rp), n), config=config)
            v, vgrid = recenter(res.field, res.grid)[0], res.grid
            bd = res.breakdown
            grad_sq = a * a / b * bd.grad_sq
            B = a * a / b * bd.B  # bd.B already carries the factor eps
            lpp = a**params.p / b**3 * bd.lpp
            mu = b * b * res.mu
            energy = a * a / b * bd.total
        else:
            res = minimize(params, grid=grid_for(geometry, n), config=config, geometry=geometry)
            v, vgrid = rescale_to_limit(res.field, res.grid, geometry)
            bd = res.breakdown
            grad_sq, B, lpp, mu, energy = bd.grad_sq, bd.B, bd.lpp, res.mu, bd.total
    except MinimizationError as err:
        log.warning("sweep: mass %g failed: %s", c, err)
        return _failed_record(c, eps, err)
    e_exp = geometry.energy_exponent
    w = sample_wp(vgrid, params.p)
    dist = h1_norm(np.real(v) - w, vgrid)
    return SweepRecord(
        c=c,
        energy_ratio=energy / c**e_exp,
        mu_ratio=mu / c**geometry.mu_exponent,
        b_ratio=abs(B) / c**e_exp,
        grad_ratio=grad_sq / c**e_exp,
        lp_ratio=lpp / c**e_exp,
        h1_dist_to_Wp=dist,
        h1_rel=dist / h1_norm(w, vgrid),
        eps=eps,
        converged=res.converged,
        iterations=res.iterations,
    )


def asymptotic_sweep(
    template: ModelParams,
    c_list,
    n: int = 64,
    config: SolverConfig = SolverConfig(),
    rescaled: bool = True,
    executor=None,
) -> list[SweepRecord]:
    """Ground states and the five normalized ratios for each mass in ``c_list``.

    Failures are recorded per mass (``converged=False``) rather than raised.
    With ``executor`` (a concurrent.futures executor) masses run concurrently.
    """
    c_list = [float(c) for c in c_list]
    if len(c_list) < 3:
        raise ValueError("the sweep needs at least three masses")
    if executor is None:
        return [sweep_point(template, c, n, config, rescaled) for c in c_list]
    futures = [executor.submit(sweep_point, template, c, n, config, rescaled) for c in c_list]
    return [f.result() for f in futures]


def fit_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def sweep_summary(records: list[SweepRecord], template: ModelParams) -> dict:
    geometry = derive_geometry(template.with_mass(records[-1].c))
    targets = limit_constants(template.p, template.lambda3, geometry.kappa)
    ok = [r for r in records if r.converged]
    out = {"targets": targets, "b_ratio_slope": math.nan, "b_ratio_slope_expected": 4 * (4 - template.p) / (10 - 3 * template.p)}
    if len(ok) >= 2 and all(r.b_ratio > 0 for r in ok):
        out["b_ratio_slope"] = fit_slope([r.c for r in ok], [r.b_ratio for r in ok])
    out["deviations"] = [
        {k: (getattr(r, k) - t) for k, t in targets.items()} for r in records
    ]
    return out


def write_sweep_csv(records: list[SweepRecord], path) -> None:
    names = list(SweepRecord.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for r in records:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])


def recenter(u: np.ndarray, grid: Grid3) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Roll the field so its density maximum sits at the grid origin.

    Returns the shifted field and the lattice shift (in grid steps) applied.
    """
    rho = np.abs(u) ** 2
    peak = float(rho.max())
    if not peak > 0 or np.ptp(rho) <= 1e-14 * peak:
        raise ValueError("flat density: no unique peak to center on")
    idx = np.unravel_index(int(np.argmax(rho)), rho.shape)
    shift = tuple(int(m // 2 - i) for i, m in zip(idx, grid.n))
    return np.roll(u, shift, axis=(0, 1, 2)), shift


def rescale_to_limit(u: np.ndarray, grid: Grid3, geometry: WellGeometry) -> tuple[np.ndarray, Grid3]:
    """v(x) = u(x / b) / a on the grid stretched by b, after peak centering."""
    a, b = rescaling(geometry)
    centered, _ = recenter(u, grid)
    vgrid = Grid3(grid.n, tuple(L * b for L in grid.box))
    return centered / a, vgrid


def _h1_weight(grid: Grid3) -> np.ndarray:
    return 1.0 + grid.k2


def _shifted_pairing(uh, ph, weight, grid, y):
    k1, k2, k3 = grid.kvec
    phase = np.exp(-1j * (k1 * y[0] + k2 * y[1] + k3 * y[2]))
    return grid.dv / grid.size * np.sum(weight * np.conj(uh * phase) * ph)


def orbit_distance(psi: np.ndarray, u: np.ndarray, grid: Grid3, refine: bool = True):
    """inf over phase theta and translation y of |psi - e^{i theta} u(. - y)|_{H^1}.

    The phase is optimal in closed form for each y; the translation is found
    on the lattice by an H^1 cross-correlation and then refined continuously.
    Returns (distance, y, theta).
    """
    weight = _h1_weight(grid)
    uh = sfft.fftn(u)
    ph = sfft.fftn(psi)
    nu = grid.dv / grid.size * float(np.sum(weight * np.abs(uh) ** 2))
    npsi = grid.dv / grid.size * float(np.sum(weight * np.abs(ph) ** 2))
    # corr[m] = <u(. - y_m), psi>_{H^1} for lattice shifts y_m
    corr = grid.dv * sfft.ifftn(weight * np.conj(uh) * ph)
    m = np.unravel_index(int(np.argmax(np.abs(corr))), corr.shape)
    y0 = np.array([(mi if mi <= ni // 2 else mi - ni) * h for mi, ni, h in zip(m, grid.n, grid.spacing)])
    best_y, best = y0, abs(corr[m])
    if refine:
        h = np.array(grid.spacing)
        res = optimize.minimize(
            lambda y: -abs(_shifted_pairing(uh, ph, weight, grid, y)),
            y0, method="Nelder-Mead",
            options={"initial_simplex": y0 + np.vstack([np.zeros(3), 0.5 * np.diag(h)]),
                     "xatol": 1e-6 * h.min(), "fatol": 1e-15 * best, "maxiter": 400},
        )
        if -res.fun > best:
            best_y, best = res.x, -res.fun
    pair = _shifted_pairing(uh, ph, weight, grid, best_y)
    d2 = max(npsi + nu - 2.0 * abs(pair), 0.0)
    return math.sqrt(d2), tuple(float(v) for v in best_y), float(np.angle(pair))


def reflection_defect(u: np.ndarray, grid: Grid3, axis: int) -> float:
    """Relative orbit distance between u and its mirror image x_axis -> -x_axis."""
    mirrored = np.roll(np.flip(u, axis=axis), 1, axis=axis)
    return orbit_distance(mirrored, u, grid)[0] / h1_norm(u, grid)


class BlowUpError(RuntimeError):
    def __init__(self, message: str, stats: "EvolutionStats"):
        super().__init__(message)
        self.stats = stats


@dataclass
class EvolutionStats:
    times: list[float] = field(default_factory=list)
    mass_drift: float = 0.0
    energy_drift: float = 0.0
    h1_dist_track: list[float] = field(default_factory=list)
    overlap_track: list[float] = field(default_factory=list)
    grad_track: list[float] = field(default_factory=list)
    steps: int = 0
    final: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("final")
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "h1_dist", "overlap", "grad_l2"])
            n = len(self.times)
            for i in range(n):
                row = [self.times[i]]
                for track in (self.h1_dist_track, self.overlap_track, self.grad_track):
                    row.append(repr(track[i]) if i < len(track) else "")
                writer.writerow(row)


def _potential(psi, grid, params):
    rho = psi.real**2 + psi.imag**2
    pot = params.lambda1 * rho
    if params.lambda2 != 0.0:
        pot = pot + params.lambda2 * density_potential(rho, grid)
    return pot + params.lambda3 * rho ** ((params.p - 2.0) / 2.0)


def splitstep_evolve(
    psi0: np.ndarray,
    T: float,
    dt: float,
    params: ModelParams,
    grid: Grid3,
    reference: np.ndarray | None = None,
    sample_every: int = 10,
    blowup_radius: float | None = None,
    track_distance: bool = False,
    snapshot_dir: str | None = None,
) -> EvolutionStats:
    """Strang splitting for i psi_t = -1/2 Delta psi + V(|psi|^2) psi.

    Half nonlinear step (exact phase rotation with frozen density), full
    kinetic step exp(-i |xi|^2 dt / 2), half nonlinear step. Consecutive
    half nonlinear steps between samples are fused. Energy, overlap with
    ``reference`` and (optionally) the orbit distance to ``reference`` are
    recorded every ``sample_every`` steps and at the end.
    """
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    if blowup_radius is None:
        geometry = derive_geometry(params)
        blowup_radius = 10.0 * geometry.t_cstar
    steps = max(1, int(round(T / dt)))
    dt = T / steps
    psi = np.asarray(psi0, dtype=complex).copy()
    c0 = mass(psi, grid)
    E0 = fn.energy(psi, grid, params).total
    kin = np.exp(-0.5j * dt * grid.k2)
    stats = EvolutionStats()

    def sample(t):
        bd = fn.energy(psi, grid, params)
        stats.times.append(t)
        stats.mass_drift = max(stats.mass_drift, abs(mass(psi, grid) - c0) / c0)
        stats.energy_drift = max(stats.energy_drift, abs(bd.total - E0) / abs(E0))
        g = math.sqrt(bd.grad_sq)
        stats.grad_track.append(g)
        if reference is not None:
            stats.overlap_track.append(abs(grid.dv * np.vdot(reference, psi)) / c0**2)
            if track_distance:
                stats.h1_dist_track.append(orbit_distance(psi, reference, grid)[0])
        if snapshot_dir is not None:
            write_snapshot(os.path.join(snapshot_dir, f"psi_{len(stats.times) - 1:05d}.bin"), psi, grid)
        if not g < blowup_radius:
            stats.steps = int(round(t / dt))
            raise BlowUpError(f"left the well: |grad psi| = {g:.6g} > {blowup_radius:.6g} at t = {t:.6g}", stats)

    sample(0.0)
    psi *= np.exp(-0.5j * dt * _potential(psi, grid, params))
    for k in range(1, steps + 1):
        psi = sfft.ifftn(kin * sfft.fftn(psi))
        if k % sample_every == 0 or k == steps:
            psi *= np.exp(-0.5j * dt * _potential(psi, grid, params))
            sample(k * dt)
            if k < steps:
                psi *= np.exp(-0.5j * dt * _potential(psi, grid, params))
        else:
            psi *= np.exp(-1j * dt * _potential(psi, grid, params))
    stats.steps = steps
    stats.final = psi
    return stats


def band_limited_perturbation(grid: Grid3, size: float, seed: int, width: float) -> np.ndarray:
    """Real smooth random field with H^1 norm ``size``: white noise filtered by a
    Gaussian of length ``width`` in Fourier space and windowed by a Gaussian
    envelope of radius 2 * width."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(grid.shape)
    f = sfft.irfftn(np.exp(-0.5 * grid.k2_half * (0.5 * width) ** 2) * sfft.rfftn(noise), s=grid.shape)
    f *= np.exp(-grid.radius**2 / (2.0 * (2.0 * width) ** 2))
    return f * (size / h1_norm(f, grid))


@dataclass
class StabilityTrial:
    eps: float
    delta: float
    seed: int
    initial_distance: float
    max_distance: float
    ok: bool
    blew_up: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StabilityReport:
    trials: list[StabilityTrial]

    @property
    def ok(self) -> bool:
        return all(t.ok for t in self.trials)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "trials": [t.to_dict() for t in self.trials]}


def stability_probe(
    ground: GroundStateResult,
    eps_list,
    T: float,
    dt: float,
    trials: int = 1,
    seed: int = 0,
    sample_every: int = 20,
) -> StabilityReport:
    """Evolve H^1 perturbations of size delta c, delta = eps/4 (mass
    re-projected), and check that the phase/translation-minimized H^1
    distance to the ground state stays below eps c on [0, T]. ``eps`` is
    relative to the mass c."""
    u, grid, params = ground.field, ground.grid, ground.params
    c = params.c
    geometry = derive_geometry(params)
    width = 1.0 / rescaling(geometry)[1]
    out = []
    for eps in eps_list:
        if not 0.0 <= eps <= 0.1:
            raise ValueError(f"eps={eps} outside [0, 0.1]")
        delta = eps / 4.0
        for j in range(trials):
            s = seed + j
            if delta > 0:
                psi0 = project_mass(u + band_limited_perturbation(grid, delta * c, s, width), c, grid)
            else:
                psi0 = u.copy()
            d0 = orbit_distance(psi0, u, grid)[0]
            try:
                stats = splitstep_evolve(psi0, T, dt, params, grid, reference=u,
                                         sample_every=sample_every, track_distance=True)
                worst = max(stats.h1_dist_track)
                out.append(StabilityTrial(eps, delta, s, d0, worst, worst < eps * c))
            except BlowUpError as err:
                worst = max(err.stats.h1_dist_track, default=math.inf)
                out.append(StabilityTrial(eps, delta, s, d0, worst, False, blew_up=True))
    return StabilityReport(out)
