"""I.i.d. environment laws on site probabilities and their kappa calibration.

An environment law ``alpha`` is a distribution of the right-step
probability ``omega`` at a single site.  Everything downstream depends on
it only through the moments of ``rho = (1 - omega) / omega``.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit
from scipy import integrate, optimize, special

from .errors import (
    CalibrationError,
    NoRootError,
    NonFiniteMomentError,
    NonTransientError,
)
from .rng import next_beta, next_double

KIND_ATOMS = 0
KIND_BETA = 1

KAPPA_BRACKET = (1e-6, 64.0)
KAPPA_BRACKET_MAX = 4096.0
QUAD_RTOL = 1e-10


@dataclass(frozen=True)
class TwoPoint:
    omega_hi: float
    omega_lo: float
    p: float | None = None

    name = "twopoint"


@dataclass(frozen=True)
class BetaLaw:
    a: float | None
    b: float

    name = "beta"


@dataclass(frozen=True)
class Discrete:
    atoms: tuple[tuple[float, float], ...]

    name = "discrete"


def _atoms_of(family):
    if isinstance(family, TwoPoint):
        return ((family.omega_hi, family.p), (family.omega_lo, 1.0 - family.p))
    if isinstance(family, Discrete):
        return tuple(family.atoms)
    return None


@dataclass(frozen=True)
class EnvDist:
    """A validated environment law.

    ``kappa`` and ``speed`` are computed once on first access.  Laws whose
    ``log rho`` lives on a lattice (every finite-atom law) are kept but
    carry ``lattice = True``; the non-lattice requirement of the limit
    theorems holds only for the Beta family.
    """

    family: TwoPoint | BetaLaw | Discrete
    ellipticity_ok: bool | None = field(default=None, compare=False)

    def __post_init__(self):
        fam = self.family
        if isinstance(fam, BetaLaw):
            if fam.a is None or not (fam.a > 0 and fam.b > 0):
                raise ValueError(f"Beta parameters must be positive, got a={fam.a}, b={fam.b}")
        else:
            atoms = _atoms_of(fam)
            if atoms is None:
                raise TypeError(f"unknown environment family {fam!r}")
            if isinstance(fam, TwoPoint) and (fam.p is None or not 0.0 < fam.p < 1.0):
                raise ValueError(f"two-point weight p must lie in (0,1), got {fam.p}")
            if not atoms:
                raise ValueError("discrete law needs at least one atom")
            for w, q in atoms:
                if not 0.0 < w < 1.0:
                    raise ValueError(f"site probability {w} not strictly inside (0,1)")
                if not q > 0.0:
                    raise ValueError(f"atom weight {q} must be positive")
            total = math.fsum(q for _, q in atoms)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"atom weights sum to {total!r}, not 1")
        if not self.log_rho_mean < 0.0:
            raise NonTransientError(
                f"<log rho> = {self.log_rho_mean:.6g} >= 0: walk is not right-transient"
            )

    @property
    def lattice(self) -> bool:
        return not isinstance(self.family, BetaLaw)

    @cached_property
    def log_rho_mean(self) -> float:
        fam = self.family
        if isinstance(fam, BetaLaw):
            return float(special.digamma(fam.b) - special.digamma(fam.a))
        return math.fsum(q * math.log((1.0 - w) / w) for w, q in _atoms_of(fam))

    @cached_property
    def kappa(self) -> float:
        """Root of ``<rho^s> = 1``; infinite when ``rho <= 1`` almost surely."""
        try:
            return solve_kappa(self)
        except NoRootError:
            return math.inf

    @cached_property
    def speed(self) -> float:
        return speed(self)

    def moment(self, s: float) -> float:
        return rho_moment(self, s)

    def site_moment(self, up: int, down: int) -> float:
        """``<omega^up (1 - omega)^down>``."""
        return site_moment(self, up, down)

    @cached_property
    def mean_omega(self) -> float:
        return self.site_moment(1, 0)

    def kernel_params(self):
        """Flat arrays describing the law to the jitted samplers."""
        fam = self.family
        if isinstance(fam, BetaLaw):
            return KIND_BETA, np.zeros(1), np.ones(1), float(fam.a), float(fam.b)
        atoms = _atoms_of(fam)
        omegas = np.array([w for w, _ in atoms], dtype=np.float64)
        cum = np.cumsum([q for _, q in atoms])
        cum[-1] = 1.0
        return KIND_ATOMS, omegas, cum, 0.0, 0.0

    def describe(self) -> dict:
        fam = self.family
        if isinstance(fam, TwoPoint):
            params = {"omega_hi": fam.omega_hi, "omega_lo": fam.omega_lo, "p": fam.p}
        elif isinstance(fam, BetaLaw):
            params = {"a": fam.a, "b": fam.b}
        else:
            params = {"atoms": [list(a) for a in fam.atoms]}
        return {"family": fam.name, "params": params, "lattice": self.lattice}


def two_point(omega_hi, omega_lo, p) -> EnvDist:
    return EnvDist(TwoPoint(float(omega_hi), float(omega_lo), float(p)))


def beta_law(a, b) -> EnvDist:
    return EnvDist(BetaLaw(float(a), float(b)))


def discrete(atoms) -> EnvDist:
    return EnvDist(Discrete(tuple((float(w), float(q)) for w, q in atoms)))


def _beta_power_moment(a, b, x, y):
    """``E[omega^x (1-omega)^y]`` for omega ~ Beta(a, b) by QAWS quadrature.

    The algebraic end-point weight takes the singular factors exactly, so
    only the constant normalisation is left as the integrand.
    """
    ea, eb = a - 1.0 + x, b - 1.0 + y
    if ea <= -1.0 or eb <= -1.0:
        raise NonFiniteMomentError(
            f"E[omega^{x} (1-omega)^{y}] diverges for Beta({a}, {b})"
        )
    lognorm = special.betaln(a, b)
    val, err = integrate.quad(
        lambda _w: 1.0, 0.0, 1.0, weight="alg", wvar=(ea, eb), epsabs=0.0, epsrel=QUAD_RTOL
    )
    return val * math.exp(-lognorm)


def rho_moment(dist: EnvDist, s: float) -> float:
    """``<rho^s>``: exact for finite-atom laws, quadrature for Beta."""
    if s < 0:
        raise ValueError("rho_moment needs s >= 0")
    if s == 0:
        return 1.0
    fam = dist.family
    if isinstance(fam, BetaLaw):
        return _beta_power_moment(fam.a, fam.b, -s, s)
    return math.fsum(q * ((1.0 - w) / w) ** s for w, q in _atoms_of(fam))


def site_moment(dist: EnvDist, up: int, down: int) -> float:
    fam = dist.family
    if up == 0 and down == 0:
        return 1.0
    if isinstance(fam, BetaLaw):
        return _beta_power_moment(fam.a, fam.b, float(up), float(down))
    return math.fsum(q * w**up * (1.0 - w) ** down for w, q in _atoms_of(fam))


def _log_moment(dist, s):
    try:
        m = rho_moment(dist, s)
    except NonFiniteMomentError:
        return math.inf
    return math.log(m) if m > 0 else -math.inf


def solve_kappa(dist: EnvDist) -> float:
    """Unique positive root of ``s -> <rho^s> - 1``.

    Works on ``log <rho^s>``, which has the same root and is also convex.
    Brent's method (bisection safeguarded by secant steps) runs inside a
    bracket that starts at ``KAPPA_BRACKET`` and expands upward.
    """
    if not dist.log_rho_mean < 0:
        raise NonTransientError("solve_kappa needs <log rho> < 0")
    lo, hi = KAPPA_BRACKET
    fam = dist.family
    if isinstance(fam, BetaLaw):
        # <rho^s> is finite only for s < a and blows up as s -> a
        hi = min(hi, fam.a * (1.0 - 1e-9))
    if not _log_moment(dist, lo) < 0:
        raise NoRootError(f"<rho^s> >= 1 already at s={lo}")
    f_hi = _log_moment(dist, hi)
    while not f_hi > 0:
        if hi >= KAPPA_BRACKET_MAX or isinstance(fam, BetaLaw):
            raise NoRootError(f"<rho^s> < 1 on the whole bracket [{lo}, {hi}]")
        lo, hi = hi, 2.0 * hi
        f_hi = _log_moment(dist, hi)
    _assert_convex(dist, KAPPA_BRACKET[0], hi)
    root = optimize.brentq(
        lambda s: _log_moment(dist, s), lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500
    )
    eps = 0.1 * root
    ok = math.isfinite(_log_moment(dist, root + eps))
    object.__setattr__(dist, "ellipticity_ok", ok)
    if not ok:
        warnings.warn(
            f"<rho^(kappa+eps)> diverges at eps=0.1*kappa={eps:.3g}; law is not kappa-regular",
            stacklevel=2,
        )
    return float(root)


def _assert_convex(dist, lo, hi, points=9):
    s = np.linspace(lo, hi, points)
    m = np.array([_log_moment(dist, x) for x in s])
    if not np.all(np.isfinite(m)):
        return
    second = m[:-2] - 2.0 * m[1:-1] + m[2:]
    if np.any(second < -1e-9 * np.maximum(1.0, np.abs(m[1:-1]))):
        raise AssertionError("log <rho^s> is not convex on the kappa bracket")


def speed(dist: EnvDist) -> float:
    """Limiting speed: zero unless ``<rho> < 1`` (equivalently kappa > 1)."""
    fam = dist.family
    if isinstance(fam, TwoPoint):
        # the low atom's weight is 1 - p exactly, not the rounded float 1.0 - p
        p = Fraction(repr(fam.p))
        atoms = ((Fraction(repr(fam.omega_hi)), p), (Fraction(repr(fam.omega_lo)), 1 - p))
    elif isinstance(fam, Discrete):
        atoms = tuple((Fraction(repr(w)), Fraction(repr(q))) for w, q in fam.atoms)
    else:
        atoms = None
    if atoms is not None:
        # exact rational arithmetic on the decimal forms keeps e.g. v = 1/4 exact
        r = sum(q * (1 - w) / w for w, q in atoms)
        return float((1 - r) / (1 + r)) if r < 1 else 0.0
    m1 = _log_moment(dist, 1.0)
    if not m1 < 0:
        return 0.0
    r = math.exp(m1)
    return (1.0 - r) / (1.0 + r)


def calibrate_to_kappa(template, target_kappa: float) -> EnvDist:
    """Fix the single free parameter of ``template`` so that kappa equals the target.

    ``template`` is a ``TwoPoint`` with ``p=None`` or a ``BetaLaw`` with
    ``a=None``.  Because ``s -> log <rho^s>`` is convex and vanishes at 0,
    kappa equals the target exactly when ``log <rho^target> = 0`` with
    negative slope at 0; that moment is monotone in the free parameter,
    so plain bisection suffices.
    """
    if not target_kappa > 0 or not math.isfinite(target_kappa):
        raise CalibrationError(f"target kappa must be positive and finite, got {target_kappa}")
    t = float(target_kappa)

    if isinstance(template, TwoPoint):
        hi_w, lo_w = template.omega_hi, template.omega_lo
        if not (0 < lo_w < 0.5 < hi_w < 1):
            raise CalibrationError("two-point calibration needs omega_lo < 1/2 < omega_hi")
        r_hi, r_lo = ((1 - hi_w) / hi_w) ** t, ((1 - lo_w) / lo_w) ** t

        def h(p):
            return math.log(p * r_hi + (1 - p) * r_lo)

        p = _bisect_decreasing(h, 0.0, 1.0)
        dist = EnvDist(TwoPoint(hi_w, lo_w, p)) if 0 < p < 1 else None
    elif isinstance(template, BetaLaw):
        b = template.b
        if not b > 0:
            raise CalibrationError("Beta calibration needs b > 0")

        def h(a):
            return _log_moment_beta(a, b, t)

        # the moment is infinite for a <= t; larger a pushes mass toward 1
        lo_a = t * (1 + 1e-12) + 1e-12
        hi_a = max(2.0 * (t + b), 1.0)
        while h(hi_a) > 0:
            hi_a *= 2
            if hi_a > 1e8:
                raise CalibrationError(f"kappa={t} unreachable for Beta(a, {b})")
        a = _bisect_decreasing(h, lo_a, hi_a)
        dist = EnvDist(BetaLaw(a, b))
    else:
        raise CalibrationError(f"family {type(template).__name__} has no free parameter to calibrate")

    if dist is None:
        raise CalibrationError(f"kappa={t} unreachable for template {template}")
    return dist


def _log_moment_beta(a, b, s):
    try:
        return math.log(_beta_power_moment(a, b, -s, s))
    except NonFiniteMomentError:
        return math.inf


def _bisect_decreasing(h, lo, hi, iters=200):
    if not (h(lo) > 0 > h(hi)):
        raise CalibrationError("target kappa is not bracketed by the admissible parameter range")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def draw_omega(state, kind, omegas, cum, a, b):
    """One site probability from the law encoded by ``EnvDist.kernel_params``."""
    if kind == KIND_BETA:
        return next_beta(state, a, b)
    if omegas.shape[0] == 1:
        return omegas[0]
    u = next_double(state)
    for i in range(omegas.shape[0] - 1):
        if u < cum[i]:
            return omegas[i]
    return omegas[omegas.shape[0] - 1]


def sample_site(dist: EnvDist, stream) -> float:
    return float(draw_omega(stream.state, *dist.kernel_params()))


def sample_sites(dist: EnvDist, stream, size: int) -> np.ndarray:
    return _draw_many(stream.state, size, *dist.kernel_params())


@njit(cache=True)
def _draw_many(state, size, kind, omegas, cum, a, b):
    out = np.empty(size)
    for i in range(size):
        out[i] = draw_omega(state, kind, omegas, cum, a, b)
    return out


def _preset_beta_half():
    # among Beta(b + 1/2, b) laws this one shows the smallest finite-n drift of the scaling exponents
    return calibrate_to_kappa(BetaLaw(None, 0.25), 0.5)


PRESETS = {
    "twopoint-k2": lambda: two_point(0.75, 0.25, 0.9),
    "beta-k05": _preset_beta_half,
}


def preset(name: str) -> EnvDist:
    """Named laws used across examples: ``twopoint-k2`` (kappa 2, v = 1/4) and ``beta-k05``."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
