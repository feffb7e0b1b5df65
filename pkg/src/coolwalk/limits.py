"""Limit laws and scaling constants.

Mittag-Leffler law of the second kind (the kappa < 1 RWRE limit), the
Gaussian/Mittag-Leffler mixtures that appear for cooled walks, and the
constants ``b``, ``K0 v`` and ``beta`` of the kappa = 2 regime.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cooling import CoolingMap, LambdaVector, a_of_lambda
from .envdist import EnvDist
from .errors import (
    InsufficientHorizonError,
    MissingConstantsError,
    NormExceededError,
    SeriesInstabilityError,
)
from .rng import next_double, next_exponential, next_normal
from .stats import tail_plateau
from .walk import ThresholdRule, endpoint_samples, tail_probabilities

log = logging.getLogger(__name__)

SERIES_CANCEL_MAX = 1e12
SERIES_ABS_TOL = 1e-10
MIXTURE_K = 64


@dataclass(frozen=True)
class MittagLeffler:
    """Law with Laplace transform ``E_kappa(-b lambda)``; equals ``b S**-kappa``
    for ``S`` positive ``kappa``-stable with ``E exp(-l S) = exp(-l**kappa)``."""

    kappa: float
    b: float = 1.0

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ValueError("Mittag-Leffler index must lie in (0, 1)")
        if self.b < 0:
            raise ValueError("scale b must be non-negative")


def ml_moments(ml: MittagLeffler) -> tuple[float, float]:
    k, b = ml.kappa, ml.b
    g1 = math.gamma(1 + k)
    mean = b / g1
    var = b * b * (2 / math.gamma(1 + 2 * k) - 1 / (g1 * g1))
    return mean, var


def ml_laplace(ml: MittagLeffler, lam: float) -> float:
    """``sum_n (-b lam)**n / Gamma(1 + kappa n)``.

    The alternating series loses about ``max|term| * eps`` to cancellation;
    an instability error is raised when that could exceed ``1e-10`` or when
    the largest term dwarfs the result by more than ``1e12``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    x = ml.b * lam
    if x == 0:
        return 1.0
    logx = math.log(x)
    terms = []
    biggest = prev = 0.0
    for n in range(100000):
        logmag = n * logx - math.lgamma(1 + ml.kappa * n)
        # the value lies in (0, 1], so a term this large is already hopeless
        if logmag > math.log(SERIES_CANCEL_MAX):
            raise SeriesInstabilityError(f"E_kappa(-{x:.6g}) has terms beyond {SERIES_CANCEL_MAX:.0e}")
        mag = math.exp(logmag)
        terms.append(-mag if n % 2 else mag)
        biggest = max(biggest, mag)
        # past the peak the terms decay super-geometrically
        if mag < prev and mag < 1e-20 * biggest:
            break
        prev = mag
    else:
        raise SeriesInstabilityError("series did not converge")
    value = math.fsum(terms)
    if biggest * 2.2e-16 * math.sqrt(len(terms)) > SERIES_ABS_TOL or (
        value != 0 and biggest > SERIES_CANCEL_MAX * abs(value)
    ):
        raise SeriesInstabilityError(
            f"E_kappa(-{x:.6g}) needs cancellation across terms up to {biggest:.3g}"
        )
    return value


@njit(cache=True)
def _ml_draw(state, kappa, b):
    # Kanter: S = (A(U)/E)**((1-k)/k) is positive k-stable, so S**-k = (E/A(U))**(1-k)
    u = next_double(state)
    e = next_exponential(state)
    k = kappa
    a = (
        math.sin((1.0 - k) * math.pi * u)
        * math.sin(k * math.pi * u) ** (k / (1.0 - k))
        / math.sin(math.pi * u) ** (1.0 / (1.0 - k))
    )
    return b * (e / a) ** (1.0 - k)


@njit(cache=True)
def _ml_fill(state, kappa, b, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = _ml_draw(state, kappa, b)
    return out


def sample_ml(ml: MittagLeffler, stream, size=None):
    """Draw from ``ml`` on ``stream`` (one value, or an array of ``size``)."""
    if size is None:
        return float(_ml_draw(stream.state, ml.kappa, ml.b))
    return _ml_fill(stream.state, ml.kappa, ml.b, int(size))


@njit(cache=True)
def _mixture_fill(state, kappa, weights, gauss, mu, sigma, size):
    out = np.empty(size)
    for i in range(size):
        s = 0.0
        for k in range(len(weights)):
            s += weights[k] * (_ml_draw(state, kappa, 1.0) - mu) / sigma
        out[i] = s + gauss * next_normal(state)
    return out


def sample_mixture(lambda_star: LambdaVector, kappa: float, b: float, stream, size=None, K: int = MIXTURE_K):
    """``sum_{k<=K} lambda(k) (M_k - mu) / sigma + sqrt(a**2 + tail) * N``.

    ``M_k`` are i.i.d. Mittag-Leffler, ``N`` is standard normal, and the l2
    mass of the weights beyond ``K`` joins the Gaussian part, so the result
    has mean 0 and variance 1 whatever ``K`` is.  ``b`` cancels in the
    normalisation; it is accepted for symmetry with the unnormalised law.
    """
    a = a_of_lambda(lambda_star)
    w = np.asarray(lambda_star.weights[:K], dtype=np.float64)
    tail = math.fsum(np.asarray(lambda_star.weights[K:]) ** 2) + lambda_star.tail_norm2
    gauss = math.sqrt(a * a + tail)
    if math.fsum(w * w) + gauss * gauss > 1 + 1e-9:
        raise NormExceededError("mixture weights exceed unit norm")
    mu, var = ml_moments(MittagLeffler(kappa, 1.0))
    n = 1 if size is None else int(size)
    out = _mixture_fill(stream.state, kappa, w, gauss, mu, math.sqrt(var), n)
    return float(out[0]) if size is None else out


def lambda_star_closed_form(family: str, params: dict | None, kappa: float) -> LambdaVector:
    """Limit weights for the named cooling families.

    ``exponential``: ``{"c": c}``, weights ``sqrt(theta**-2 - 1) theta**k`` with
    ``theta = exp(-c kappa)``.  ``polynomial``: zero vector.
    ``superexp``: ``{"theta": t}``, the two weights ``(1, t**kappa) / sqrt(1 + t**(2 kappa))``.
    ``interweaved``: ``{"sigma_m2": s, "var_z1": v}``, weights ``sqrt(s / (s + v)) 2**(-k/2)``.
    """
    params = params or {}
    if family == "exponential":
        theta = math.exp(-params["c"] * kappa)
        scale = math.sqrt(theta**-2 - 1)
        return LambdaVector.from_function(lambda k: scale * theta**k, norm2=1.0)
    if family == "polynomial":
        return LambdaVector([])
    if family == "superexp":
        t = params["theta"] ** kappa
        d = math.sqrt(1 + t * t)
        return LambdaVector([1 / d, t / d])
    if family == "interweaved":
        s, v = params["sigma_m2"], params["var_z1"]
        r = s / (s + v)
        return LambdaVector.from_function(lambda k: math.sqrt(r) * 2 ** (-k / 2), norm2=r)
    raise ValueError(f"no closed-form weights for family {family!r}")


# ---------------------------------------------------------------- kappa = 2

JACKKNIFE_GROUPS = 20


@dataclass(frozen=True)
class K2Constants:
    """Estimated constants of a kappa = 2 environment.

    ``total`` estimates ``b**2 + K0 v``, the growth rate of ``Var(Z_n) / n``
    in ``log n``.  ``replicates`` holds the leave-one-group-out values of
    ``(b_sq, k0v)``; :meth:`propagate` uses them to put a standard error on
    any function of the constants.
    """

    v: float
    b_sq: float
    k0v: float
    beta: float
    total: float
    stderr: dict
    grid: tuple[int, ...]
    replicas: int
    seed: int
    method: str = "regression"
    k0v_tail: float | None = None
    k0v_tail_stderr: float | None = None
    replicates: np.ndarray | None = field(default=None, repr=False, compare=False)

    def propagate(self, f) -> tuple[float, float]:
        """``f(b_sq, k0v)`` and its jackknife standard error."""
        value = float(f(self.b_sq, self.k0v))
        if self.replicates is None or len(self.replicates) < 2:
            return value, 0.0
        return value, _jackknife_se([f(b, k) for b, k in self.replicates])

    def to_dict(self) -> dict:
        d = {
            "v": self.v,
            "b_sq": self.b_sq,
            "k0v": self.k0v,
            "beta": self.beta,
            "total": self.total,
            "stderr": dict(self.stderr),
            "grid": list(self.grid),
            "replicas": self.replicas,
            "seed": self.seed,
            "method": self.method,
            "k0v_tail": self.k0v_tail,
            "k0v_tail_stderr": self.k0v_tail_stderr,
        }
        if self.replicates is not None:
            d["replicates"] = [[float(a), float(b)] for a, b in self.replicates]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "K2Constants":
        reps = d.get("replicates")
        return cls(
            v=float(d["v"]),
            b_sq=float(d["b_sq"]),
            k0v=float(d["k0v"]),
            beta=float(d["beta"]),
            total=float(d["total"]),
            stderr=dict(d["stderr"]),
            grid=tuple(int(n) for n in d["grid"]),
            replicas=int(d["replicas"]),
            seed=int(d["seed"]),
            method=d.get("method", "regression"),
            k0v_tail=d.get("k0v_tail"),
            k0v_tail_stderr=d.get("k0v_tail_stderr"),
            replicates=None if reps is None else np.asarray(reps, dtype=np.float64),
        )

    @classmethod
    def from_json(cls, text: str) -> "K2Constants":
        return cls.from_dict(json.loads(text))


def _jackknife_se(values) -> float:
    a = np.asarray(values, dtype=np.float64)
    g = len(a)
    return float(math.sqrt((g - 1) / g * np.sum((a - a.mean()) ** 2)))


def _robust_scale(d) -> float:
    q1, q3 = np.percentile(d, [25, 75])
    return float((q3 - q1) / 1.349)


def _truncation_grid(d, n, v, lo_scale, hi_frac, points):
    lo, hi = lo_scale * _robust_scale(d), hi_frac * n * v
    if not 0 < lo < hi:
        return None
    return np.geomspace(lo, hi, points)


def _k2_point(samples, v, top, method, lo_scale, hi_frac, points):
    """One evaluation of ``(total, b_sq, k0v_tail)`` from ``{n: endpoints}``."""
    grid = sorted(samples)
    logs = np.array([math.log(n) for n in grid])
    ratios = []
    rows, ys = [], []
    centred = {}
    for n in grid:
        z = samples[n].astype(np.float64)
        d = z - z.mean()
        centred[n] = d
        ratios.append(np.dot(d, d) / (len(d) - 1) / n)
    ratios = np.array(ratios)
    sel = slice(len(grid) - top, None)

    if method == "plateau":
        total = float(np.mean(ratios[sel] / logs[sel]))
        rule = ThresholdRule.sqrt_log4()
        b = []
        for n in grid[sel]:
            d = centred[n]
            x = rule.level(n)
            b.append(np.sum(np.where(np.abs(d) <= x, d * d, 0.0)) / len(d) / (n * math.log(n)))
        b_sq = float(np.mean(b))
    else:
        total = float(np.polyfit(logs[sel], ratios[sel], 1)[0])
        # truncated second moment / n ~ b^2 log n + K0 v (2 log(x/sqrt n) - x/(n v)) + const
        for n, ln in zip(grid, logs):
            d = centred[n]
            xs = _truncation_grid(d, n, v, lo_scale, hi_frac, points)
            if xs is None:
                continue
            d2 = d * d
            ad = np.abs(d)
            for x in xs:
                rows.append((ln, 2 * math.log(x / math.sqrt(n)) - x / (n * v), 1.0))
                ys.append(np.sum(np.where(ad <= x, d2, 0.0)) / len(d) / n)
        if len(rows) < 4:
            raise InsufficientHorizonError("no grid point has a usable truncation window")
        coef = np.linalg.lstsq(np.array(rows), np.array(ys), rcond=None)[0]
        b_sq = float(coef[0])

    n = grid[-1]
    z = samples[n]
    xs = _truncation_grid(z - z.mean(), n, v, lo_scale, hi_frac, points)
    tail = None
    if xs is not None:
        pts = tail_probabilities(z, n, v, xs)
        tail = tail_plateau([(x, p) for x, p, _ in pts], n, v, window=(xs[0], xs[-1])).estimate * v
    return total, b_sq, tail


def k2_constants_from_samples(
    samples,
    v: float,
    seed: int = 0,
    method: str = "regression",
    groups: int = JACKKNIFE_GROUPS,
    lo_scale: float = 4.0,
    hi_frac: float = 0.5,
    points: int = 8,
) -> K2Constants:
    """:func:`estimate_k2_constants` on given endpoint samples ``{n: array}``.

    ``method="plateau"`` averages ``Var/(n log n)`` and the ``sqrt(n) log^4 n``
    truncated ratio over the top half of the grid.  At simulable ``n`` that
    threshold exceeds ``2 n`` so nothing is truncated and ``b_sq == total``.

    ``method="regression"`` (default) takes ``total`` as the slope of
    ``Var/n`` against ``log n`` over the top half of the grid and ``b_sq`` from a
    joint fit of truncated second moments over ``(n, x)``, with ``x`` running
    over ``points`` geometric levels between ``lo_scale`` robust standard
    deviations and ``hi_frac * n v``.

    Standard errors are delete-one-group jackknife over ``groups`` groups of
    replicas (replica index mod ``groups``).
    """
    if method not in ("regression", "plateau"):
        raise ValueError(f"unknown method {method!r}")
    grid = sorted(int(n) for n in samples)
    if len(grid) < 3 or grid[0] < 2:
        raise ValueError("need at least three grid points, all >= 2")
    if not v > 0:
        raise ValueError("kappa = 2 constants need a positive speed")
    samples = {n: np.asarray(samples[n]) for n in grid}
    r = min(len(z) for z in samples.values())
    if any(len(z) != r for z in samples.values()):
        raise ValueError("every grid point needs the same number of replicas")
    top = max(2, (len(grid) + 1) // 2)
    args = (v, top, method, lo_scale, hi_frac, points)

    total, b_sq, tail = _k2_point(samples, *args)
    gid = np.arange(r) % groups
    reps = []
    for g in range(groups):
        keep = gid != g
        reps.append(_k2_point({n: z[keep] for n, z in samples.items()}, *args))
    reps = np.array([[np.nan if x is None else x for x in row] for row in reps])

    k0v = total - b_sq
    se_total = _jackknife_se(reps[:, 0])
    se_b = _jackknife_se(reps[:, 1])
    se_k = _jackknife_se(reps[:, 0] - reps[:, 1])
    if k0v < -3 * se_k:
        raise InsufficientHorizonError(
            f"K0 v = {k0v:.4g} is negative beyond 3 stderr ({se_k:.3g}); n is too small"
        )
    if not b_sq > 0:
        raise InsufficientHorizonError(f"b^2 = {b_sq:.4g} is not positive")
    # b^2 may exceed the total by noise when K0 v is (nearly) zero
    beta = math.sqrt(min(b_sq / total, 1.0))
    with np.errstate(invalid="ignore"):
        beta_reps = np.sqrt(np.minimum(reps[:, 1] / reps[:, 0], 1.0))
    if tail is not None:
        k_tail, se_tail = float(tail), _jackknife_se(reps[:, 2])
    else:
        k_tail = se_tail = None
    return K2Constants(
        v=float(v),
        b_sq=b_sq,
        k0v=k0v,
        beta=beta,
        total=total,
        stderr={"b_sq": se_b, "k0v": se_k, "beta": _jackknife_se(beta_reps), "total": se_total},
        grid=tuple(grid),
        replicas=r,
        seed=int(seed),
        method=method,
        k0v_tail=k_tail,
        k0v_tail_stderr=se_tail,
        replicates=np.column_stack([reps[:, 1], reps[:, 0] - reps[:, 1]]),
    )


def estimate_k2_constants(dist: EnvDist, n_grid, replicas: int, seed: int, method: str = "regression", **kw) -> K2Constants:
    """Estimate ``v``, ``b**2``, ``K0 v`` and ``beta = b / sqrt(b**2 + K0 v)``.

    Endpoints at every grid point come from :func:`walk.endpoint_samples`
    with the same seed.  ``k0v_tail`` is an independent check: the
    plateau of ``P(Z_n - n v < -x) x**2 / (n v - x)`` at the largest ``n``,
    times ``v``.
    """
    kappa = dist.kappa
    if not abs(kappa - 2) < 1e-6:
        raise ValueError(f"environment has kappa = {kappa:.6g}, not 2")
    grid = sorted(int(n) for n in n_grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    samples = {n: endpoint_samples(dist, n, replicas, seed) for n in grid}
    return k2_constants_from_samples(samples, dist.speed, seed=seed, method=method, **kw)


@dataclass(frozen=True)
class BetaN:
    n: int
    beta_n: float
    b_tilde: float
    stderr: float
    mode: str
    s_n: float

    def record(self) -> dict:
        return {"n": self.n, "beta_n": self.beta_n, "b_tilde": self.b_tilde,
                "stderr": self.stderr, "mode": self.mode, "s_n": self.s_n}


def asymptotic_truncated_variance(T: int, x: float, constants: K2Constants) -> float:
    """``b^2 T log T + 2 K0 v T log((x ^ T v/2) / sqrt T)``."""
    y = min(x, T * constants.v / 2)
    return constants.b_sq * T * math.log(T) + 2 * constants.k0v * T * math.log(y / math.sqrt(T))


def _grouped_truncated_var(z, x, groups):
    """Variance of ``Z~ 1{|Z~| <= x}`` (``Z~`` centred at the sample mean), full and leave-one-group-out."""
    z = np.asarray(z, dtype=np.float64)
    gid = np.arange(len(z)) % groups

    def tv(w):
        d = w - w.mean()
        y = np.where(np.abs(d) <= x, d, 0.0)
        return float(np.var(y, ddof=1))

    return tv(z), np.array([tv(z[gid != g]) for g in range(groups)])


def beta_n_sequence(
    dist: EnvDist,
    cmap: CoolingMap,
    n_list,
    constants: K2Constants | None,
    mode: str = "mc",
    replicas: int = 10**4,
    seed: int = 0,
    approx_min_T: int = 1024,
    groups: int = JACKKNIFE_GROUPS,
) -> list[BetaN]:
    """``beta_n = max(beta, b~_n)`` along ``n_list``.

    ``b~_n**2 = sum_k Var(Z~_T 1{|Z~_T| <= x_T}) / s_n**2`` with
    ``s_n**2 = sum_k Var(Z_T)`` over the blocks ``T = T_{k,n}`` and
    ``x_T = max(s_n / sqrt(log s_n), sqrt(T) log(T)**4)``.  Block variances are
    Monte Carlo, ``replicas`` walks per distinct ``T``.

    ``mode="approx"`` replaces the truncated variance by its tail asymptotics
    (:func:`asymptotic_truncated_variance`) when ``x_T >= sqrt(T) log(T)**4`` and
    ``T >= approx_min_T``.  When ``x_T >= 2 T`` truncation cannot bite and the
    untruncated variance is used; anything else falls back to Monte Carlo
    with a warning.  The asymptotic formula ignores ``O(T)`` terms and can
    overshoot, so ``b~_n`` is capped at 1 inside ``beta_n`` (the record
    keeps the raw value).
    """
    if constants is None:
        raise MissingConstantsError("beta_n needs estimated kappa = 2 constants")
    if mode not in ("mc", "approx"):
        raise ValueError(f"unknown mode {mode!r}")
    out = []
    cache: dict = {}

    def samples(T):
        if T not in cache:
            cache[T] = endpoint_samples(dist, T, replicas, seed)
        return cache[T]

    gid = np.arange(replicas) % groups
    beta_se = constants.stderr.get("beta", 0.0)
    for n in n_list:
        n = int(n)
        counts = cmap.increment_counts(n)
        var = {}
        for T in counts:
            z = samples(T).astype(np.float64)
            full = float(np.var(z, ddof=1))
            loo = np.array([np.var(z[gid != g], ddof=1) for g in range(groups)])
            var[T] = (full, loo)
        s2 = math.fsum(c * var[T][0] for T, c in counts.items())
        s2_loo = sum(c * var[T][1] for T, c in counts.items())
        if not s2 > 0:
            raise ValueError(f"s_n^2 = 0 at n = {n}")
        s = math.sqrt(s2)
        x1 = s / math.sqrt(math.log(s)) if s > math.e else 0.0
        num = 0.0
        num_loo = np.zeros(groups)
        used = set()
        for T, c in counts.items():
            xt = ThresholdRule.a_kn(s, T).level(T)
            window = T > 1 and xt >= math.sqrt(T) * math.log(T) ** 4
            if mode == "approx" and window and T >= approx_min_T:
                val, loo = asymptotic_truncated_variance(T, xt, constants), None
                used.add("approx")
            elif xt >= 2 * T:
                val, loo = var[T]
                used.add("mc" if mode == "mc" else "exact")
            else:
                if mode == "approx":
                    warnings.warn(
                        f"threshold {xt:.4g} below the asymptotic window for T={T}; using Monte Carlo",
                        RuntimeWarning,
                        stacklevel=2,
                    )
                val, loo = _grouped_truncated_var(samples(T), xt, groups)
                used.add("mc")
            num += c * val
            num_loo += c * (np.full(groups, val) if loo is None else loo)
        bt = math.sqrt(num / s2)
        bt_se = _jackknife_se(np.sqrt(num_loo / s2_loo))
        if bt > 1 + 1e-12:
            log.warning("b~_n = %.6g exceeds 1 at n = %d (approximation outside its range); capped", bt, n)
        beta_n = max(constants.beta, min(bt, 1.0))
        se = bt_se if bt >= constants.beta else beta_se
        tag = mode if mode == "mc" else "+".join(sorted(used))
        out.append(BetaN(n, beta_n, bt, se, tag, s))
    return out


def predicted_k2_scalings(example: str, constants: K2Constants | None, alpha: float | None = None,
                          t: float | None = None, var_z1: float | None = None) -> tuple[float, float]:
    """Predicted ``lim beta_n`` (with stderr) for the worked cooling examples.

    ``"poly"``: ``1`` for ``alpha <= 1``, else ``sqrt((b^2 + K0 v / alpha) / (b^2 + K0 v))``.
    ``"exp"``: ``beta``.
    ``"oscillation"``: ``alpha_t = sqrt((b^2 + t V) / (b^2 + K0 v + t V))`` with ``V = Var(Z_1)``.
    """
    if constants is None:
        raise MissingConstantsError("predictions need estimated kappa = 2 constants")
    if example == "poly":
        if alpha is None or alpha <= 0:
            raise ValueError("poly needs alpha > 0")
        if alpha <= 1:
            return 1.0, 0.0
        return constants.propagate(lambda b, k: math.sqrt((b + k / alpha) / (b + k)))
    if example == "exp":
        return constants.propagate(lambda b, k: math.sqrt(b / (b + k)))
    if example == "oscillation":
        if t is None or t < 0:
            raise ValueError("oscillation needs t >= 0")
        if var_z1 is None:
            raise ValueError("oscillation needs var_z1")
        return constants.propagate(lambda b, k: math.sqrt((b + t * var_z1) / (b + k + t * var_z1)))
    raise ValueError(f"unknown example {example!r}")
