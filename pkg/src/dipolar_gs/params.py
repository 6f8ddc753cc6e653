"""Problem instance, parameter regime and the closed-form constants of the
local-minimization well.

All constants follow from (lambda1, lambda2, lambda3, p, c) together with
the Gagliardo-Nirenberg constants C_p and C_4, which come from
:mod:`dipolar_gs.wp_oracle` unless passed explicitly.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize

__all__ = [
    "ModelParams",
    "WellGeometry",
    "RegimeReport",
    "AuxReport",
    "in_d0",
    "lambda_cap",
    "validate_regime",
    "derive_geometry",
    "h_c",
    "g_c",
    "h_c_prime",
    "well_radii",
    "aux_structure_check",
]

P_UPPER = 10.0 / 3.0
P_MARGIN = 1e-6
FOUR_PI_3 = 4.0 * math.pi / 3.0
EIGHT_PI_3 = 8.0 * math.pi / 3.0


@dataclass(frozen=True)
class ModelParams:
    lambda1: float
    lambda2: float
    lambda3: float
    p: float
    c: float

    @property
    def scalar(self) -> bool:
        """True for the pure p-power problem (no quartic or dipolar term)."""
        return self.lambda1 == 0.0 and self.lambda2 == 0.0

    def with_mass(self, c: float) -> "ModelParams":
        return replace(self, c=float(c))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        return cls(**{k: float(data[k]) for k in ("lambda1", "lambda2", "lambda3", "p", "c")})

    @classmethod
    def from_json(cls, path) -> "ModelParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def in_d0(lambda1: float, lambda2: float) -> bool:
    """(lambda1, lambda2) in D0: lambda1 < (4pi/3) lambda2 <= 0 or lambda1 < -(8pi/3) lambda2 <= 0."""
    a = FOUR_PI_3 * lambda2
    b = -EIGHT_PI_3 * lambda2
    return (lambda1 < a <= 0.0) or (lambda1 < b <= 0.0)


def lambda_cap(lambda1: float, lambda2: float, convention: str = "plancherel") -> float:
    """Constant Lambda with |B(u)| <= Lambda |u|_4^4.

    ``"plancherel"``: max |lambda1 + lambda2 khat| over the range of khat, the
    sharp constant for B as defined (B = (2pi)^-3 int (...)|rho^|^2 and
    (2pi)^-3 |rho^|_2^2 = |rho|_2^2). ``"reduced"``: the same maximum divided by
    (2pi)^3, kept for reference; with it the bound fails already for
    lambda2 = 0, where B = lambda1 |u|_4^4.
    """
    m = max(abs(lambda1 - FOUR_PI_3 * lambda2), abs(lambda1 + EIGHT_PI_3 * lambda2))
    if convention == "plancherel":
        return m
    if convention == "reduced":
        return m / (2.0 * math.pi) ** 3
    raise ValueError(f"unknown Lambda convention {convention!r}")


@dataclass(frozen=True)
class WellGeometry:
    params: ModelParams
    delta_p: float
    Lambda: float
    C_p: float
    C_4: float
    c_star: float
    c_upper: float
    t_cstar: float
    t_c: float
    t_bar_c: float
    t_hat_c: float
    R0: float
    R1: float
    kappa: float
    beta_c: float
    gamma_c: float
    R0_excess: float = math.nan  # R0 / t_bar_c - 1, resolves R0 > t_bar_c below double spacing

    @property
    def energy_exponent(self) -> float:
        """(6-p)/(2-p delta_p), the scaling of m(c, R0) in c."""
        p = self.params.p
        return (6.0 - p) / (2.0 - p * self.delta_p)

    @property
    def mu_exponent(self) -> float:
        """2(p-2)/(2-p delta_p)."""
        p = self.params.p
        return 2.0 * (p - 2.0) / (2.0 - p * self.delta_p)

    @property
    def p_coefficient(self) -> float:
        """2|lambda3| C_p^p c^{p(1-delta)} / p, the coefficient of t^{p delta} in h_c."""
        prm = self.params
        return 2.0 * abs(prm.lambda3) * self.C_p**prm.p * prm.c ** (prm.p * (1.0 - self.delta_p)) / prm.p

    @property
    def cubic_coefficient(self) -> float:
        """Lambda C_4^4 c / 2."""
        return self.Lambda * self.C_4**4 * self.params.c / 2.0

    def energy_bound(self) -> float:
        """-kappa c^{(6-p)/(2-p delta)}: strict upper bound on m(c, R0)."""
        return -self.kappa * self.params.c**self.energy_exponent

    def mu_interval(self) -> tuple[float, float]:
        prm = self.params
        p, d = prm.p, self.delta_p
        e = 2.0 - p * d
        cm = prm.c**self.mu_exponent
        upper = (1 - d) / (2 * d) * (4 * (3 - p * d) * abs(prm.lambda3) * self.C_p**p / p) ** (2 / e) * cm
        return self.kappa * cm, upper

    def grad_sq_interval(self) -> tuple[float, float]:
        prm = self.params
        p, d = prm.p, self.delta_p
        e = 2.0 - p * d
        ce = prm.c**self.energy_exponent
        lower = 2 * p * d / e * self.kappa * ce
        upper = (4 * (3 - p * d) * abs(prm.lambda3) * self.C_p**p / p) ** (2 / e) * ce
        return lower, upper

    def ordering_chain(self) -> list[float]:
        c = self.params.c
        return [0.0, self.t_bar_c, self.R0, c / self.c_star * self.t_cstar, self.t_cstar, self.t_c, self.R1]

    def ordering_holds(self) -> bool:
        chain = self.ordering_chain()
        links = [a < b for a, b in zip(chain, chain[1:])]
        # t_bar_c < R0 can be closer than one ulp; use the root finder's excess
        links[1] = self.R0_excess > 0.0 if math.isfinite(self.R0_excess) else links[1]
        return all(links)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "params"}
        out.update({f"params.{k}": v for k, v in self.params.to_dict().items()})
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in out.items()}


@dataclass
class RegimeReport:
    ok: bool
    reasons: list[str] = field(default_factory=list)
    scalar: bool = False

    def __bool__(self) -> bool:
        return self.ok


def _gn_constants(p: float, C_p: float | None, C_4: float | None) -> tuple[float, float]:
    if C_p is None or C_4 is None:
        from .wp_oracle import gn_constant_for

        C_p = gn_constant_for(p) if C_p is None else C_p
        C_4 = gn_constant_for(4.0) if C_4 is None else C_4
    return C_p, C_4


def derive_geometry(params: ModelParams, C_p: float | None = None, C_4: float | None = None,
                    convention: str = "plancherel") -> WellGeometry:
    """All closed-form constants and the zeros R0 < R1 of h_c.

    For c > c_star the radii are NaN. For the scalar case (lambda1 = lambda2 = 0)
    Lambda = 0 and every threshold is infinite.
    """
    p, c, lam3 = params.p, params.c, params.lambda3
    if not 2.0 < p < P_UPPER - P_MARGIN:
        raise ValueError(f"p={p} must lie in (2, 10/3 - {P_MARGIN:g})")
    if lam3 >= 0.0:
        raise ValueError("lambda3 must be negative")
    if c <= 0.0:
        raise ValueError("mass c must be positive")
    C_p, C_4 = _gn_constants(p, C_p, C_4)
    if C_p <= 0.0 or C_4 <= 0.0:
        raise ValueError("Gagliardo-Nirenberg constants must be positive")
    a3 = abs(lam3)
    d = 3.0 * (p - 2.0) / (2.0 * p)
    pd = p * d
    e = 2.0 - pd
    Lam = lambda_cap(params.lambda1, params.lambda2, convention)
    LC4 = Lam * C_4**4
    Cpp = C_p**p
    if LC4 > 0.0:
        c_star = (p / (4 * (3 - pd) * a3 * Cpp) * (e / ((3 - pd) * LC4)) ** e) ** (1.0 / (2.0 * (4.0 - p)))
        c_upper = (1 / (2 * a3 * d * (3 - pd) * Cpp) * (2 * e / (3 * (3 - pd) * LC4)) ** e) ** (1.0 / (2.0 * (4.0 - p)))
        t_cstar = e / ((3 - pd) * LC4 * c_star)
        t_c = e / ((3 - pd) * LC4 * c)
        t_hat = 2 * e / (3 * (3 - pd) * LC4 * c)
    else:
        c_star = c_upper = t_cstar = t_c = t_hat = math.inf
    t_bar = (4 * a3 * Cpp * c ** (p * (1 - d)) / p) ** (1.0 / e)
    kappa = (10 - 3 * p) / (6 * (p - 2)) * (2 * d * Cpp * a3) ** (2.0 / e)
    beta = (1 - d) * (2 * d) ** (pd / e) * (Cpp * a3) ** (2.0 / e) * c ** (2 * (p - 2) / e)
    gamma = beta / (1 - d)
    geom = WellGeometry(
        params=params, delta_p=d, Lambda=Lam, C_p=C_p, C_4=C_4,
        c_star=c_star, c_upper=c_upper, t_cstar=t_cstar, t_c=t_c, t_bar_c=t_bar, t_hat_c=t_hat,
        R0=math.nan, R1=math.nan, kappa=kappa, beta_c=beta, gamma_c=gamma,
    )
    if c <= c_star * (1.0 + 1e-13):
        R0, R1, x0 = _well_roots(params, geom)
        geom = replace(geom, R0=R0, R1=R1, R0_excess=x0)
    return geom


def validate_regime(params: ModelParams, geometry: WellGeometry | None = None) -> RegimeReport:
    """Check lambda3 < 0, 2 < p < 10/3, c > 0, (lambda1, lambda2) in D0 and c <= c_star.

    The pure p-power problem lambda1 = lambda2 = 0 sits on the boundary of D0;
    it is accepted and flagged ``scalar`` since it is the closed-form reference case.
    """
    reasons = []
    if not params.lambda3 < 0.0:
        reasons.append(f"lambda3={params.lambda3} is not negative")
    if not 2.0 < params.p < P_UPPER:
        reasons.append(f"p={params.p} outside (2, 10/3)")
    elif params.p >= P_UPPER - P_MARGIN:
        reasons.append(f"p={params.p} within {P_MARGIN:g} of 10/3")
    if not params.c > 0.0:
        reasons.append(f"mass c={params.c} is not positive")
    if not (params.scalar or in_d0(params.lambda1, params.lambda2)):
        reasons.append(f"(lambda1, lambda2)=({params.lambda1}, {params.lambda2}) not in D0")
    if not reasons:
        geometry = geometry or derive_geometry(params)
        if params.c > geometry.c_star * (1.0 + 1e-13):
            reasons.append(f"mass above threshold: c={params.c:.10g} > c_star={geometry.c_star:.10g}")
    return RegimeReport(ok=not reasons, reasons=reasons, scalar=params.scalar)


def h_c(t, geometry: WellGeometry):
    """h_c(t) = t^2/2 - (Lambda C_4^4 c/2) t^3 - (2|lambda3| C_p^p c^{p(1-delta)}/p) t^{p delta}."""
    t = np.asarray(t, dtype=float)
    pd = geometry.params.p * geometry.delta_p
    return 0.5 * t**2 - geometry.cubic_coefficient * t**3 - geometry.p_coefficient * t**pd


def g_c(t, geometry: WellGeometry):
    """h_c without the cubic term; h_c <= g_c."""
    t = np.asarray(t, dtype=float)
    pd = geometry.params.p * geometry.delta_p
    return 0.5 * t**2 - geometry.p_coefficient * t**pd


def h_c_prime(t, geometry: WellGeometry):
    t = np.asarray(t, dtype=float)
    pd = geometry.params.p * geometry.delta_p
    return t - 3.0 * geometry.cubic_coefficient * t**2 - pd * geometry.p_coefficient * t ** (pd - 1.0)


def _h_scaled(t: float, geometry: WellGeometry) -> float:
    # h_c(t) / t^{p delta}: same sign, better conditioned for root finding
    pd = geometry.params.p * geometry.delta_p
    return 0.5 * t ** (2 - pd) - geometry.cubic_coefficient * t ** (3 - pd) - geometry.p_coefficient


def well_radii(params: ModelParams, geometry: WellGeometry) -> tuple[float, float]:
    """Zeros R0 < R1 of h_c by bracketed root finding (brentq) on
    (t_bar_c, (c/c_star) t_cstar) and (t_c, T), T doubled until h_c(T) < 0."""
    R0, R1, _ = _well_roots(params, geometry)
    return R0, R1


def _well_roots(params: ModelParams, geometry: WellGeometry) -> tuple[float, float, float]:
    c = params.c
    if c > geometry.c_star * (1.0 + 1e-13):
        raise ValueError(f"c={c} exceeds c_star={geometry.c_star}: h_c has no positive region")
    if math.isinf(geometry.c_star):
        # no cubic term: h_c = g_c vanishes only at t_bar_c
        return geometry.t_bar_c, math.inf, 0.0
    if abs(c / geometry.c_star - 1.0) <= 1e-13:
        return geometry.t_cstar, geometry.t_cstar, geometry.t_cstar / geometry.t_bar_c - 1.0

    # In x = t / t_bar - 1, h_c(t) / (p_coef t^{p delta}) becomes
    # (1+x)^e - 1 - k (1+x)^{e+1}, k = cubic t_bar^{3 - p delta} / p_coef, e = 2 - p delta.
    # expm1/log1p keep the sign right near x = 0, where h_c(t_bar) = -cubic t_bar^3 is tiny.
    e = 2.0 - params.p * geometry.delta_p
    tb = geometry.t_bar_c
    k = geometry.cubic_coefficient * tb ** (1.0 + e) / geometry.p_coefficient

    def f(x):
        lx = math.log1p(x)
        return math.expm1(e * lx) - k * math.exp((e + 1.0) * lx)

    # brentq rather than bisect: for p near 10/3 and small c the root x0 can be
    # many decades below the bracket width, out of reach of 400 halvings
    kw = dict(xtol=1e-300, rtol=1e-14, maxiter=400)
    x0 = optimize.brentq(f, 0.0, c / geometry.c_star * geometry.t_cstar / tb - 1.0, **kw)
    lo = geometry.t_c / tb - 1.0
    hi = 2.0 * lo + 1.0
    while f(hi) >= 0.0:
        hi = 2.0 * hi + 1.0
    x1 = optimize.brentq(f, lo, hi, **kw)
    return tb * (1.0 + x0), tb * (1.0 + x1), x0


@dataclass
class AuxReport:
    critical_points: list[float]
    n_critical: int
    psi_max: float
    psi_threshold: float
    psi_condition: bool
    min_before_max: bool

    @property
    def ok(self) -> bool:
        return self.n_critical == 2 and self.psi_condition and self.min_before_max


def aux_structure_check(params: ModelParams, geometry: WellGeometry, samples: int = 20001) -> AuxReport:
    """Count the critical points of h_c from sign changes of a sampled h_c'
    and compare max psi_c = psi_c(t_hat) with 2|lambda3| delta C_p^p c^{p(1-delta)}."""
    pd = params.p * geometry.delta_p
    t_hat = geometry.t_hat_c
    if not math.isfinite(t_hat):
        t_hat = geometry.t_bar_c
    t = np.geomspace(t_hat * 1e-10, t_hat * 1e4, samples)
    # h_c'(t) / t^{pd-1} = psi_c(t) - threshold, with psi_c(t) = t^{2-pd} - (3 Lambda C4^4 c/2) t^{3-pd}
    threshold = pd * geometry.p_coefficient
    psi = t ** (2 - pd) - 3.0 * geometry.cubic_coefficient * t ** (3 - pd)
    sign = np.sign(psi - threshold)
    idx = np.nonzero(sign[1:] != sign[:-1])[0]
    crit = [float(np.sqrt(t[i] * t[i + 1])) for i in idx]
    psi_max = (t_hat ** (2 - pd) / (3 - pd)) if math.isfinite(geometry.t_hat_c) else math.inf
    min_before_max = len(crit) == 2 and crit[0] < crit[1] and sign[idx[0]] < 0 < sign[idx[0] + 1]
    return AuxReport(
        critical_points=crit,
        n_critical=len(crit),
        psi_max=psi_max,
        psi_threshold=threshold,
        psi_condition=psi_max > threshold,
        min_before_max=bool(min_before_max),
    )
