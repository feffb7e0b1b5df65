"""RWRE endpoints: Monte Carlo (quenched and annealed), exact small-n oracle,
moment and tail estimators, regeneration times.

Simulation kernels keep the environment as an array of 32-bit step
thresholds: a step goes right when the next 32-bit word of the stream is
below ``floor(omega * 2**32)``.  Sites are materialised lazily the first
time the walk reaches them, so memory use follows the visited range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit, prange

from .envdist import EnvDist, draw_omega
from .errors import OracleSizeError, WindowError
from .rng import STATE_SIZE, init_state, next_u32, stream_index

TWO32 = 4294967296.0
CHUNK = 64  # replicas per work item; fixed so results ignore the thread count
ORACLE_MAX_N = 20

TAG_WALK = 1
TAG_PATH = 2


@dataclass(frozen=True)
class WalkOutcome:
    n: int
    z: int
    path: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if abs(self.z) > self.n or (self.z + self.n) % 2:
            raise ValueError(f"endpoint {self.z} impossible after {self.n} steps")


@dataclass(frozen=True)
class MomentEstimate:
    n: int
    mean: float
    variance: float
    second_moment: float
    replicas: int
    stderr_mean: float
    stderr_var: float
    seed: int | None = None

    def record(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "variance": self.variance,
            "second_moment": self.second_moment,
            "stderr_mean": self.stderr_mean,
            "stderr_var": self.stderr_var,
            "replicas": self.replicas,
            "seed": self.seed,
        }


@njit(cache=True, inline="always")
def _threshold(omega):
    return np.uint64(math.floor(omega * TWO32))


@njit(cache=True)
def annealed_steps(n, state, kind, omegas, cum, a, b, buf):
    """Endpoint after ``n`` steps in a fresh environment drawn lazily from ``state``.

    ``buf`` must hold at least ``2 n + 3`` entries; its content on entry is
    ignored.
    """
    origin = n + 1
    pos = origin
    lo = origin
    hi = origin
    buf[origin] = _threshold(draw_omega(state, kind, omegas, cum, a, b))
    for _ in range(n):
        u = next_u32(state)
        if u < buf[pos]:
            pos += 1
            if pos > hi:
                hi = pos
                buf[pos] = _threshold(draw_omega(state, kind, omegas, cum, a, b))
        else:
            pos -= 1
            if pos < lo:
                lo = pos
                buf[pos] = _threshold(draw_omega(state, kind, omegas, cum, a, b))
    return pos - origin


@njit(cache=True)
def _annealed_path(n, state, kind, omegas, cum, a, b):
    buf = np.empty(2 * n + 3, dtype=np.uint64)
    origin = n + 1
    path = np.empty(n + 1, dtype=np.int64)
    pos = origin
    lo = origin
    hi = origin
    buf[origin] = _threshold(draw_omega(state, kind, omegas, cum, a, b))
    path[0] = 0
    for t in range(n):
        u = next_u32(state)
        if u < buf[pos]:
            pos += 1
            if pos > hi:
                hi = pos
                buf[pos] = _threshold(draw_omega(state, kind, omegas, cum, a, b))
        else:
            pos -= 1
            if pos < lo:
                lo = pos
                buf[pos] = _threshold(draw_omega(state, kind, omegas, cum, a, b))
        path[t + 1] = pos - origin
    return path


@njit(cache=True)
def _quenched_path(n, state, thresholds, origin, record):
    pos = origin
    path = np.empty(n + 1 if record else 1, dtype=np.int64)
    path[0] = 0
    for t in range(n):
        if next_u32(state) < thresholds[pos]:
            pos += 1
        else:
            pos -= 1
        if record:
            path[t + 1] = pos - origin
    if not record:
        path[0] = pos - origin
    return path


@njit(parallel=True, cache=True)
def _annealed_batch(n, seed, base_index, count, kind, omegas, cum, a, b):
    out = np.empty(count, dtype=np.int64)
    nchunks = (count + CHUNK - 1) // CHUNK
    for c in prange(nchunks):
        state = np.empty(STATE_SIZE, dtype=np.uint64)
        buf = np.empty(2 * n + 3, dtype=np.uint64)
        stop = min(count, (c + 1) * CHUNK)
        for r in range(c * CHUNK, stop):
            init_state(state, seed, base_index + np.uint64(r))
            out[r] = annealed_steps(n, state, kind, omegas, cum, a, b, buf)
    return out


def _stream_state(stream):
    return stream.state


def simulate_endpoint(dist: EnvDist, n: int, stream, mode="annealed", env=None, record_path=False):
    """One walk of ``n`` steps.

    ``mode="annealed"`` draws the environment from ``dist`` on the fly, on
    the same stream.  ``mode="quenched"`` walks in ``env``, an array of site
    probabilities for sites ``-n..n`` (index ``i`` is site ``i - n``).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if mode == "annealed":
        if record_path:
            path = _annealed_path(n, _stream_state(stream), *dist.kernel_params())
            return WalkOutcome(n, int(path[-1]), path)
        buf = np.empty(2 * n + 3, dtype=np.uint64)
        z = annealed_steps(n, _stream_state(stream), *dist.kernel_params(), buf)
        return WalkOutcome(n, int(z))
    if mode == "quenched":
        env = np.asarray(env, dtype=np.float64)
        if env.shape != (2 * n + 1,):
            raise ValueError(f"quenched environment must cover sites -n..n ({2 * n + 1} values)")
        thresholds = np.floor(env * TWO32).astype(np.uint64)
        path = _quenched_path(n, _stream_state(stream), thresholds, n, record_path)
        if record_path:
            return WalkOutcome(n, int(path[-1]), path)
        return WalkOutcome(n, int(path[0]))
    raise ValueError(f"unknown mode {mode!r}")


@lru_cache(maxsize=64)
def _endpoint_samples_cached(dist, n, replicas, seed, tag):
    base = stream_index(0, tag)
    out = _annealed_batch(
        n, np.uint64(seed), np.uint64(base), replicas, *dist.kernel_params()
    )
    out.setflags(write=False)
    return out


def endpoint_samples(dist: EnvDist, n: int, replicas: int, seed: int, tag: int = TAG_WALK) -> np.ndarray:
    """Annealed endpoints of replicas ``0..replicas-1``; replica ``r`` uses stream ``(seed, r)``.

    Results are cached, so the moment, truncated-moment and tail estimators
    called with the same arguments all see the same sample.
    """
    if n < 0 or replicas < 1:
        raise ValueError("need n >= 0 and replicas >= 1")
    return _endpoint_samples_cached(dist, int(n), int(replicas), int(seed), int(tag))


def moments_from_samples(z, n=0, seed=None) -> MomentEstimate:
    """Unbiased mean/variance with standard errors.

    Integer samples are summed exactly, which makes the result independent
    of summation order.
    """
    z = np.asarray(z)
    r = len(z)
    if r < 2:
        raise ValueError("need at least two replicas")
    if np.issubdtype(z.dtype, np.integer):
        s1 = int(z.sum(dtype=np.int64))
        s2 = int(np.dot(z.astype(np.int64), z.astype(np.int64)))
        mean = s1 / r
        var = (r * s2 - s1 * s1) / (r * (r - 1))
        second = s2 / r
    else:
        mean = math.fsum(z) / r
        d = z - mean
        var = math.fsum(d * d) / (r - 1)
        second = math.fsum(z * z) / r
    d = z.astype(np.float64) - mean
    m4 = math.fsum(d**4) / r
    se_var = math.sqrt(max(m4 - var * var * (r - 3) / (r - 1), 0.0) / r)
    return MomentEstimate(
        n=n,
        mean=mean,
        variance=max(var, 0.0),
        second_moment=second,
        replicas=r,
        stderr_mean=math.sqrt(max(var, 0.0) / r),
        stderr_var=se_var,
        seed=seed,
    )


def mc_moments(dist: EnvDist, n: int, replicas: int, seed: int) -> MomentEstimate:
    if replicas < 2:
        raise ValueError("mc_moments needs replicas >= 2")
    return moments_from_samples(endpoint_samples(dist, n, replicas, seed), n=n, seed=seed)


@dataclass(frozen=True)
class ThresholdRule:
    """Truncation level for centred endpoints.

    ``fixed``: a given ``x``.  ``sqrt_log4``: ``sqrt(n) log(n)^4``.
    ``a_kn``: ``s / sqrt(log s)`` or ``sqrt(T) log(T)^4``, whichever is larger,
    for a cooled walk with total standard deviation ``s`` and block length ``T``.
    """

    kind: str
    x: float | None = None
    s: float | None = None
    T: int | None = None

    @classmethod
    def fixed(cls, x):
        return cls("fixed", x=float(x))

    @classmethod
    def sqrt_log4(cls):
        return cls("sqrt_log4")

    @classmethod
    def a_kn(cls, s, T):
        return cls("a_kn", s=float(s), T=int(T))

    def level(self, n: int) -> float:
        if self.kind == "fixed":
            x = self.x
        elif self.kind == "sqrt_log4":
            x = math.sqrt(n) * math.log(n) ** 4 if n > 1 else 0.0
        elif self.kind == "a_kn":
            s, t = self.s, self.T
            left = s / math.sqrt(math.log(s)) if s > 1 else 0.0
            right = math.sqrt(t) * math.log(t) ** 4 if t > 1 else 0.0
            x = max(left, right)
        else:
            raise ValueError(f"unknown threshold rule {self.kind!r}")
        if x < 0:
            raise ValueError("threshold must be non-negative")
        return x


def truncated_second_moment_from_samples(z, x: float, center: float | None = None) -> float:
    z = np.asarray(z, dtype=np.float64)
    c = z.mean() if center is None else center
    d = z - c
    keep = np.abs(d) <= x
    return math.fsum(d[keep] ** 2) / len(z)


def truncated_second_moment(dist, n, threshold_rule, replicas, seed):
    """``E[(Z_n - m)^2; |Z_n - m| <= x]`` with ``m`` the sample mean.

    Returns ``(value, x)``.
    """
    x = threshold_rule.level(n)
    if threshold_rule.kind == "fixed" and not x >= 0:
        raise ValueError("threshold must be non-negative")
    z = endpoint_samples(dist, n, replicas, seed)
    return truncated_second_moment_from_samples(z, x), x


def theorem_tail_window(n: int, v: float) -> tuple[float, float]:
    """The window ``[sqrt(n) log^3 n, n v - log n]`` of the precise slowdown tail."""
    ln = math.log(n)
    return math.sqrt(n) * ln**3, n * v - ln


def tail_probabilities(z, n, v, x_grid):
    """Empirical ``P(Z_n - n v < -x)`` with binomial standard errors."""
    z = np.sort(np.asarray(z, dtype=np.float64))
    r = len(z)
    out = []
    for x in x_grid:
        k = int(np.searchsorted(z, n * v - x, side="left"))
        p = k / r
        out.append((float(x), p, math.sqrt(p * (1 - p) / r)))
    return out


def left_tail_curve(dist, n, x_grid, replicas, seed, window=None):
    """Tail curve on ``x_grid``; every point must lie in ``window``.

    The default window is the one where the precise slowdown asymptotics
    hold; it is empty until ``n`` is astronomically large, so practical
    runs pass an explicit ``window``.
    """
    v = dist.speed
    lo, hi = theorem_tail_window(n, v) if window is None else window
    bad = [x for x in x_grid if not lo <= x <= hi]
    if bad:
        raise WindowError(
            f"x={bad[0]:.6g} outside the tail window [{lo:.6g}, {hi:.6g}] at n={n}"
        )
    z = endpoint_samples(dist, n, replicas, seed)
    return tail_probabilities(z, n, v, x_grid)


# ---------------------------------------------------------------- exact oracle


@njit(cache=True)
def _enumerate_paths(n, table):
    """Sum path weights by endpoint; ``table[u, d] = <omega^u (1 - omega)^d>``."""
    pmf = np.zeros(2 * n + 1)
    ups = np.zeros(2 * n + 1, dtype=np.int64)
    downs = np.zeros(2 * n + 1, dtype=np.int64)
    for code in range(1 << n):
        ups[:] = 0
        downs[:] = 0
        pos = n
        for t in range(n):
            if (code >> t) & 1:
                ups[pos] += 1
                pos += 1
            else:
                downs[pos] += 1
                pos -= 1
        w = 1.0
        for x in range(2 * n + 1):
            if ups[x] or downs[x]:
                w *= table[ups[x], downs[x]]
        pmf[pos] += w
    return pmf


def exact_annealed_pmf(dist: EnvDist, n: int) -> dict[int, float]:
    """Annealed law of ``Z_n`` by enumerating all ``2**n`` step sequences.

    Each site is an independent draw from the environment law, so a path's
    probability factorises over sites into moments ``<omega^u (1-omega)^d>``
    of the up and down counts made from that site.
    """
    if n > ORACLE_MAX_N:
        raise OracleSizeError(f"path enumeration is capped at n={ORACLE_MAX_N}, got {n}")
    if n < 0:
        raise ValueError("n must be non-negative")
    table = np.empty((n + 1, n + 1))
    for u in range(n + 1):
        for d in range(n + 1):
            table[u, d] = dist.site_moment(u, d) if u + d <= n else 0.0
    pmf = _enumerate_paths(n, table)
    total = math.fsum(pmf)
    if abs(total - 1.0) > 1e-12:
        raise ArithmeticError(f"oracle probabilities sum to {total!r}")
    return {z: float(pmf[z + n]) for z in range(-n, n + 1) if (z + n) % 2 == 0}


def tv_distance(samples, pmf: dict[int, float]) -> float:
    z = np.asarray(samples)
    values, counts = np.unique(z, return_counts=True)
    emp = dict(zip(values.tolist(), (counts / len(z)).tolist()))
    keys = set(emp) | set(pmf)
    return 0.5 * math.fsum(abs(emp.get(k, 0.0) - pmf.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------- regenerations


@dataclass(frozen=True)
class Regeneration:
    time: int
    level: int
    censored: bool


def regeneration_split(path, margin: int = 50) -> list[Regeneration]:
    """Indices ``m > 0`` with ``max(path[:m]) < path[m] <= min(path[m+1:])``.

    The future minimum only covers the recorded horizon, so a regeneration
    is marked censored when the final level is less than ``margin`` above
    it: the walk could still come back below it later.
    """
    p = np.asarray(path, dtype=np.int64)
    if len(p) < 2:
        return []
    prefix_max = np.maximum.accumulate(p)
    suffix_min = np.minimum.accumulate(p[::-1])[::-1]
    m = np.arange(1, len(p))
    future_min = np.append(suffix_min[2:], np.iinfo(np.int64).max)
    ok = (prefix_max[m - 1] < p[m]) & (p[m] <= future_min)
    final = p[-1]
    return [Regeneration(int(i), int(p[i]), bool(final - p[i] < margin)) for i in m[ok]]


def regeneration_increments(dist, n, seed, replicas=1, margin=50):
    """Uncensored ``(dZ, dR)`` pairs between consecutive regenerations.

    The first pair of every path is dropped: only increments after the
    first regeneration share the law of ``(Z_R1, R1)`` conditioned on never
    going below the start.
    """
    from .rng import derive_stream

    dz, dr = [], []
    for r in range(replicas):
        st = derive_stream(seed, r, TAG_PATH)
        path = simulate_endpoint(dist, n, st, record_path=True).path
        regs = [g for g in regeneration_split(path, margin) if not g.censored]
        for g0, g1 in zip(regs[1:], regs[2:]):
            dz.append(g1.level - g0.level)
            dr.append(g1.time - g0.time)
    return np.array(dz, dtype=np.int64), np.array(dr, dtype=np.int64)
