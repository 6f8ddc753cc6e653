"""Radial ground state W_p, the Gagliardo-Nirenberg constant C_p, and the
closed-form minimizer v_c of the pure p-power problem.

W_p is the positive radial solution of

    -Delta W + (1/delta_p - 1) W = (2/(p delta_p)) W^(p-1),   W'(0) = 0, W(inf) = 0,

obtained here by shooting on W(0).
"""
from __future__ import annotations

import csv
import json
import math
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize
from scipy.integrate import ode, simpson, solve_bvp, solve_ivp
from scipy.interpolate import CubicSpline

__all__ = [
    "RadialProfile",
    "ScalarGroundState",
    "delta_p",
    "solve_wp",
    "solve_wp_collocation",
    "gn_constant",
    "radial_norms",
    "ground_profile",
    "gn_constant_for",
    "v_c_profile",
    "write_profile_csv",
    "profile_summary",
]

_R_START = 1e-3
_TAIL_FLOOR = 1e-12


def delta_p(p: float) -> float:
    return 3.0 * (p - 2.0) / (2.0 * p)


def _coefficients(p: float) -> tuple[float, float]:
    d = delta_p(p)
    return 1.0 / d - 1.0, 2.0 / (p * d)


@dataclass(frozen=True)
class RadialProfile:
    """Samples of a positive radial profile on a uniform mesh.

    ``tail_amplitude`` and ``decay`` describe the exponential continuation
    ``A exp(-k r) / r`` used beyond ``r_max`` (``evaluate`` applies it).
    """

    r: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    r_max: float
    p: float
    reliable_radius: float
    tail_amplitude: float
    decay: float

    @property
    def w0(self) -> float:
        return float(self.w[0])

    @cached_property
    def spline(self) -> CubicSpline:
        # clamped at r=0 (even profile)
        return CubicSpline(self.r, self.w, bc_type=((1, 0.0), (1, self.dw[-1])))

    def evaluate(self, radius) -> np.ndarray:
        radius = np.asarray(radius, dtype=float)
        spline = self.spline
        out = np.empty_like(radius)
        inside = radius <= self.r_max
        out[inside] = spline(radius[inside])
        far = radius[~inside]
        out[~inside] = self.tail_amplitude * np.exp(-self.decay * far) / far
        return out

    def scaled(self, amplitude: float, rate: float) -> "RadialProfile":
        """Profile of ``amplitude * w(rate * r)``."""
        return RadialProfile(
            r=self.r / rate,
            w=amplitude * self.w,
            dw=amplitude * rate * self.dw,
            r_max=self.r_max / rate,
            p=self.p,
            reliable_radius=self.reliable_radius / rate,
            tail_amplitude=amplitude * self.tail_amplitude / rate,
            decay=self.decay * rate,
        )


@dataclass(frozen=True)
class ScalarGroundState:
    profile: RadialProfile
    mass_norm: float
    C_p: float
    beta_c: float
    m0: float
    energy: float
    grad_norm: float


def _series_start(p: float, s: float) -> tuple[float, list[float]]:
    a, b = _coefficients(p)
    f0 = a * s - b * s ** (p - 1)
    df0 = a - b * (p - 1) * s ** (p - 2)
    c2 = f0 / 6.0
    c4 = df0 * f0 / 120.0
    r0 = _R_START
    return r0, [s + c2 * r0**2 + c4 * r0**4, 2 * c2 * r0 + 4 * c4 * r0**3]


def _rhs(p: float):
    a, b = _coefficients(p)

    def f(r, y):
        w, dw = y
        return [dw, -2.0 / r * dw + a * w - b * abs(w) ** (p - 2) * w]

    return f


def _classify(p: float, s: float, r_max: float) -> int:
    """+1 if W(0)=s overshoots (crosses zero), -1 if it undershoots, 0 if undecided."""
    r0, y0 = _series_start(p, s)
    verdict = [0]

    def solout(r, y):
        if y[0] < 0.0:
            verdict[0] = 1
            return -1
        if y[1] > 0.0:
            verdict[0] = -1
            return -1
        return 0

    solver = ode(_rhs(p)).set_integrator("dop853", rtol=1e-13, atol=1e-16, nsteps=200000)
    solver.set_solout(solout)
    solver.set_initial_value(y0, r0)
    solver.integrate(r_max)
    return verdict[0]


def _trajectory(p: float, s: float, r_mesh: np.ndarray) -> np.ndarray:
    """(w, w') on ``r_mesh`` from the series start, NaN once the trajectory
    leaves the positive decreasing branch."""
    r0, y0 = _series_start(p, s)

    def leave(r, y):
        return min(y[0], -y[1]) if r > 2 * r0 else 1.0

    leave.terminal = True
    sol = solve_ivp(_rhs(p), (r0, r_mesh[-1]), y0, method="DOP853", rtol=1e-13, atol=1e-16,
                    dense_output=True, events=leave)
    out = np.full((r_mesh.size, 2), np.nan)
    keep = r_mesh <= sol.t[-1]
    keep[0] = False
    out[keep] = sol.sol(r_mesh[keep]).T
    out[0] = [s, 0.0]
    return out


def _inward_tail(p: float, log_amp: float, r_tail: np.ndarray) -> np.ndarray:
    """(w, w') on ``r_tail`` for the solution equal to ``A exp(-k r)/r`` at
    r_tail[-1], integrated inward."""
    a, _ = _coefficients(p)
    k = math.sqrt(a)
    R = r_tail[-1]
    wR = math.exp(log_amp - k * R) / R
    sol = solve_ivp(_rhs(p), (R, r_tail[0]), [wR, -(k + 1.0 / R) * wR], method="DOP853",
                    rtol=1e-12, atol=1e-300, dense_output=True)
    return sol.sol(r_tail).T


def _bracket(p: float, r_max: float) -> tuple[float, float]:
    lo, hi = 2.5, 3.5
    for _ in range(60):
        k = _classify(p, hi, r_max)
        if k == 1:
            break
        if k == -1:
            lo = hi
        hi *= 1.5
    else:
        raise RuntimeError(f"no overshooting W(0) found for p={p}")
    for _ in range(60):
        k = _classify(p, lo, r_max)
        if k == -1:
            break
        if k == 1:
            hi = lo
        lo /= 1.5
    else:
        raise RuntimeError(f"no undershooting W(0) found for p={p}")
    return lo, hi


def shoot_height(p: float, r_max: float = 60.0, rel_width: float = 1e-15) -> tuple[float, float]:
    """Bisection bracket (lo, hi) for W(0): lo undershoots, hi overshoots."""
    lo, hi = _bracket(p, r_max)
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        k = _classify(p, mid, r_max)
        if k == 1:
            hi = mid
        elif k == -1:
            lo = mid
        else:
            raise RuntimeError(f"r_max={r_max} too small to classify W(0)={mid}")
    return lo, hi


def solve_wp(p: float, r_max: float | None = None, tol: float = 1e-6, dr: float = 0.005) -> RadialProfile:
    """Positive radial solution W_p by shooting on W(0).

    The shooting trajectory is kept where it is numerically reliable (the
    two bracketing trajectories agree to 1e-6). Beyond that radius the tail
    is integrated inward from ``r_max``, starting on the decaying mode
    ``A exp(-k r)/r``, with ``A`` fixed by continuity at the matching radius.

    ``r_max`` starts at 30 (or the given value) and is doubled until the
    tail is below 1e-12 W(0). Raises if the ODE residual exceeds ``tol``
    (relative to W(0)).
    """
    if not 2.0 < p < 6.0:
        raise ValueError(f"p={p} outside (2, 6)")
    a, _ = _coefficients(p)
    k = math.sqrt(a)
    lo, hi = shoot_height(p)

    r_rel_guess = 60.0
    mesh = np.arange(0.0, r_rel_guess + dr / 2, dr)
    mesh[0] = _R_START
    low = _trajectory(p, lo, mesh)
    high = _trajectory(p, hi, mesh)
    agree = np.isfinite(low[:, 0]) & np.isfinite(high[:, 0])
    agree &= np.abs(low[:, 0] - high[:, 0]) <= 1e-6 * np.abs(low[:, 0])
    n_ok = int(np.argmin(agree)) if not agree.all() else agree.size
    # stay well inside the agreement region
    n_ok = max(int(0.9 * n_ok), 10)
    w_ok = 0.5 * (low[:n_ok, 0] + high[:n_ok, 0])
    dw_ok = 0.5 * (low[:n_ok, 1] + high[:n_ok, 1])
    r_m = mesh[n_ok - 1]

    # split (w, w') at r_m into e^{-kr}/r and e^{kr}/r modes; keep the decaying one
    fm, fp = math.exp(-k * r_m) / r_m, math.exp(k * r_m) / r_m
    dfm, dfp = -(k + 1.0 / r_m) * fm, (k - 1.0 / r_m) * fp
    amp = (w_ok[-1] * dfp - fp * dw_ok[-1]) / (fm * dfp - fp * dfm)

    s = 0.5 * (lo + hi)
    if r_max is None:
        r_max = 30.0
    while amp * math.exp(-k * r_max) / r_max >= _TAIL_FLOOR * s:
        r_max *= 2.0
    r = np.arange(0.0, r_max + dr / 2, dr)
    r[-1] = r_max
    w = np.empty_like(r)
    dw = np.empty_like(r)
    n_in = min(n_ok, r.size)
    w[:n_in] = w_ok[:n_in]
    dw[:n_in] = dw_ok[:n_in]
    w[0], dw[0] = s, 0.0
    # the nonlinear tail, integrated inward from r_max (stable direction for
    # the decaying mode) with its amplitude fixed by continuity at r_m
    r_tail = r[n_in - 1:]

    def mismatch(log_amp):
        return math.log(_inward_tail(p, log_amp, r_tail)[0, 0]) - math.log(w_ok[-1])

    guess = math.log(amp)
    lo_a, hi_a = guess - 1.0, guess + 1.0
    while mismatch(lo_a) > 0:
        lo_a -= 2.0
    while mismatch(hi_a) < 0:
        hi_a += 2.0
    log_amp = optimize.brentq(mismatch, lo_a, hi_a, xtol=1e-14)
    amp = math.exp(log_amp)
    tail = _inward_tail(p, log_amp, r_tail)
    w[n_in:] = tail[1:, 0]
    dw[n_in:] = tail[1:, 1]

    profile = RadialProfile(
        r=r, w=w, dw=dw, r_max=float(r_max), p=p,
        reliable_radius=float(r_m), tail_amplitude=float(amp), decay=k,
    )
    res = ode_residual(profile)
    if res > tol:
        raise RuntimeError(f"W_p residual {res:.2e} exceeds tol {tol:.1e}")
    if w[-1] > _TAIL_FLOOR * s * 10:
        raise RuntimeError("profile does not decay inside r_max")
    return profile


def ode_residual(profile: RadialProfile) -> float:
    """max |W'' + 2W'/r - aW + bW^(p-1)| / W(0) over the mesh (r > 0),
    with W'' from differentiating a spline of the stored W'."""
    a, b = _coefficients(profile.p)
    r, w, dw = profile.r[1:], profile.w[1:], profile.dw[1:]
    d2w = CubicSpline(profile.r, profile.dw)(r, 1)
    res = d2w + 2.0 / r * dw - a * w + b * np.abs(w) ** (profile.p - 2) * w
    return float(np.max(np.abs(res[5:-5])) / profile.w0)


def _collocate(p: float, r: np.ndarray, guess: np.ndarray):
    a, b = _coefficients(p)
    k = math.sqrt(a)
    r_max = r[-1]
    S = np.array([[0.0, 0.0], [0.0, -2.0]])

    def fun(x, y):
        return np.vstack([y[1], a * y[0] - b * np.abs(y[0]) ** (p - 2) * y[0]])

    def bc(ya, yb):
        return np.array([ya[1], yb[1] + (k + 1.0 / r_max) * yb[0]])

    return solve_bvp(fun, bc, r, guess, S=S, tol=1e-9, max_nodes=500000)


def solve_wp_collocation(p: float, r_max: float | None = None, nodes: int = 4000,
                         p_step: float = 0.1) -> RadialProfile:
    """Independent W_p by collocation (scipy's solve_bvp) on [0, r_max]
    with the Robin condition of the linear tail at r_max.

    Newton on the collocation system converges from a sech-shaped guess
    at p = 3; other exponents are reached by continuation in p.
    """
    k = math.sqrt(_coefficients(p)[0])
    if r_max is None:
        r_max = 5.0 + 22.0 / k
    r = np.linspace(0.0, r_max, nodes)
    k3 = math.sqrt(_coefficients(3.0)[0])
    w = 3.0 / np.cosh(k3 * r / 1.5) ** 2
    y = np.vstack([w, np.gradient(w, r)])
    n_steps = max(1, int(math.ceil(abs(p - 3.0) / p_step)))
    for q in np.linspace(3.0, p, n_steps + 1)[int(p == 3.0):]:
        sol = _collocate(float(q), r, y)
        if not sol.success:
            raise RuntimeError(f"collocation failed at p={q}: {sol.message}")
        y = sol.sol(r)
    rr = np.linspace(0.0, r_max, 20 * nodes + 1)
    y = sol.sol(rr)
    return RadialProfile(
        r=rr, w=y[0], dw=y[1], r_max=r_max, p=p, reliable_radius=r_max,
        tail_amplitude=float(y[0, -1] * r_max * math.exp(k * r_max)), decay=k,
    )


def radial_norms(profile: RadialProfile, p: float | None = None) -> dict[str, float]:
    """Mass, gradient and L^p norms of the 3D radial function by Simpson's rule."""
    p = profile.p if p is None else p
    r, w, dw = profile.r, profile.w, profile.dw
    four_pi = 4.0 * math.pi
    mass2 = four_pi * simpson(w**2 * r**2, x=r)
    grad2 = four_pi * simpson(dw**2 * r**2, x=r)
    lpp = four_pi * simpson(np.abs(w) ** p * r**2, x=r)
    return {"mass": math.sqrt(mass2), "grad": math.sqrt(grad2), "lpp": lpp}


def gn_constant(profile: RadialProfile, p: float | None = None) -> float:
    """C_p = (p / (2 ||W_p||_2^(p-2)))^(1/p)."""
    p = profile.p if p is None else p
    mass = radial_norms(profile, p)["mass"]
    return (p / (2.0 * mass ** (p - 2))) ** (1.0 / p)


_CACHE: dict[float, RadialProfile] = {}
_CACHE_LOCK = threading.Lock()


def ground_profile(p: float) -> RadialProfile:
    """Cached ``solve_wp(p)``; computed once per exponent."""
    key = float(p)
    with _CACHE_LOCK:
        profile = _CACHE.get(key)
        if profile is None:
            profile = solve_wp(key)
            _CACHE[key] = profile
    return profile


def gn_constant_for(p: float) -> float:
    return gn_constant(ground_profile(p))


def v_c_profile(geometry, mass_tol: float = 1e-6) -> ScalarGroundState:
    """Closed-form minimizer of I(v) = 1/2 |grad v|^2 - (2|lam3|/p) |v|_p^p on S_c:

        v_c(x) = [2 beta_c / (p (1-delta) |lam3|)]^(1/(p-2)) W_p(sqrt(2 delta beta_c/(1-delta)) x)

    ``geometry`` is a :class:`dipolar_gs.params.WellGeometry`.
    """
    prm = geometry.params
    p, lam3, c = prm.p, abs(prm.lambda3), prm.c
    d = geometry.delta_p
    beta = geometry.beta_c
    amp = (2.0 * beta / (p * (1.0 - d) * lam3)) ** (1.0 / (p - 2.0))
    rate = math.sqrt(2.0 * d * beta / (1.0 - d))
    profile = ground_profile(p).scaled(amp, rate)
    norms = radial_norms(profile, p)
    if abs(norms["mass"] / c - 1.0) > mass_tol:
        raise RuntimeError(f"v_c mass {norms['mass']:.10g} deviates from c={c:.10g}")
    energy = 0.5 * norms["grad"] ** 2 - 2.0 * lam3 / p * norms["lpp"]
    return ScalarGroundState(
        profile=profile,
        mass_norm=norms["mass"],
        C_p=geometry.C_p,
        beta_c=beta,
        m0=-geometry.kappa * c ** ((6.0 - p) / (2.0 - p * d)),
        energy=energy,
        grad_norm=norms["grad"],
    )


def write_profile_csv(profile: RadialProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "w"])
        for ri, wi in zip(profile.r, profile.w):
            writer.writerow([repr(float(ri)), repr(float(wi))])


def profile_summary(profile: RadialProfile) -> dict:
    norms = radial_norms(profile)
    return {
        "p": profile.p,
        "W0": profile.w0,
        "mass_norm": norms["mass"],
        "C_p": gn_constant(profile),
    }


def dump_summary(profile: RadialProfile, path) -> None:
    with open(path, "w") as fh:
        json.dump(profile_summary(profile), fh, indent=2)
