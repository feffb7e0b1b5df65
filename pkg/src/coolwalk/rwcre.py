"""Random walk in a cooling random environment.

By the strong Markov property at the resampling times, ``X_n`` has the law
of a sum of independent annealed RWRE endpoints, one per effective
increment ``T_{k,n}``, each in its own fresh environment.  That is how it
is simulated here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .cooling import CoolingMap
from .envdist import EnvDist
from .errors import ZeroVarianceError
from .rng import STATE_SIZE, init_state, stream_index
from .walk import CHUNK, MomentEstimate, annealed_steps, mc_moments, moments_from_samples

TAG_RWCRE = 3


@dataclass(frozen=True)
class RwcreSample:
    n: int
    x: int
    per_block: tuple[int, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if abs(self.x) > self.n:
            raise ValueError("|x| cannot exceed n")
        if self.per_block is not None and sum(self.per_block) != self.x:
            raise ValueError("block endpoints do not add up to x")


@njit(cache=True)
def _blocks(state, incs, kind, omegas, cum, a, b, buf, record):
    x = 0
    for i in range(len(incs)):
        z = annealed_steps(incs[i], state, kind, omegas, cum, a, b, buf)
        record[i] = z
        x += z
    return x


@njit(parallel=True, cache=True)
def _x_batch(incs, seed, base_index, count, kind, omegas, cum, a, b):
    out = np.empty(count, dtype=np.int64)
    tmax = 0
    for t in incs:
        tmax = max(tmax, t)
    nchunks = (count + CHUNK - 1) // CHUNK
    for c in prange(nchunks):
        state = np.empty(STATE_SIZE, dtype=np.uint64)
        buf = np.empty(2 * tmax + 3, dtype=np.uint64)
        rec = np.empty(len(incs), dtype=np.int64)
        stop = min(count, (c + 1) * CHUNK)
        for r in range(c * CHUNK, stop):
            init_state(state, seed, base_index + np.uint64(r))
            out[r] = _blocks(state, incs, kind, omegas, cum, a, b, buf, rec)
    return out


def simulate_x(dist: EnvDist, cmap: CoolingMap, n: int, stream, record_blocks: bool = False) -> RwcreSample:
    """One draw of ``X_n``; blocks run in order on ``stream``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    incs = np.ascontiguousarray(cmap.effective_increments(n), dtype=np.int64) if n else np.zeros(0, np.int64)
    tmax = int(incs.max()) if len(incs) else 0
    buf = np.empty(2 * tmax + 3, dtype=np.uint64)
    rec = np.empty(len(incs), dtype=np.int64)
    x = _blocks(stream.state, incs, *dist.kernel_params(), buf, rec)
    return RwcreSample(n, int(x), tuple(int(z) for z in rec) if record_blocks else None)


def x_samples(dist: EnvDist, cmap: CoolingMap, n: int, replicas: int, seed: int) -> np.ndarray:
    """``X_n`` for replicas ``0..replicas-1``; replica ``r`` runs on stream ``(seed, r)``."""
    if n < 0 or replicas < 1:
        raise ValueError("need n >= 0 and replicas >= 1")
    incs = np.ascontiguousarray(cmap.effective_increments(n), dtype=np.int64) if n else np.zeros(0, np.int64)
    base = stream_index(0, TAG_RWCRE)
    return _x_batch(incs, np.uint64(seed), np.uint64(base), int(replicas), *dist.kernel_params())


_VAR_CACHE: dict = {}


def block_moments(dist: EnvDist, T: int, replicas: int, seed: int) -> MomentEstimate:
    """Memoised ``mc_moments`` for one block length."""
    key = (dist, int(T), int(replicas), int(seed))
    if key not in _VAR_CACHE:
        _VAR_CACHE[key] = mc_moments(dist, int(T), replicas, seed)
    return _VAR_CACHE[key]


@dataclass(frozen=True)
class XStats:
    moments: MomentEstimate
    var_blocks: float
    var_blocks_stderr: float
    block_moments: dict = field(repr=False, compare=False)

    def record(self) -> dict:
        d = self.moments.record()
        d["var_blocks"] = self.var_blocks
        d["var_blocks_stderr"] = self.var_blocks_stderr
        return d


def mc_stats_x(dist: EnvDist, cmap: CoolingMap, n: int, replicas: int, seed: int) -> XStats:
    """Moments of ``X_n`` plus the block-sum variance ``sum_k Var(Z_{T_{k,n}})``.

    Block variances come from independent RWRE runs (one per distinct
    increment, memoised), so the two variance estimates are independent.
    """
    if replicas < 2:
        raise ValueError("replicas must be at least 2")
    x = x_samples(dist, cmap, n, replicas, seed)
    counts = cmap.increment_counts(n) if n else {}
    bm = {t: block_moments(dist, t, replicas, seed) for t in counts}
    var = math.fsum(c * bm[t].variance for t, c in counts.items())
    se = math.sqrt(math.fsum((c * bm[t].stderr_var) ** 2 for t, c in counts.items()))
    return XStats(moments_from_samples(x, n=n, seed=seed), var, se, bm)


def normalize(x, beta: float = 1.0) -> np.ndarray:
    """``(x - mean) / (beta * sd)`` with the sample's own mean and standard deviation."""
    x = np.asarray(x)
    est = moments_from_samples(x)
    if est.variance <= 0:
        raise ZeroVarianceError("sample variance is zero; nothing to normalise")
    return (x.astype(np.float64) - est.mean) / (beta * math.sqrt(est.variance))


def normalized_samples(dist, cmap, n, replicas, seed, scaling="stdev", beta: float | None = None) -> np.ndarray:
    """Centred and scaled ``X_n`` samples.

    ``scaling="stdev"`` divides by the sample standard deviation;
    ``scaling="custom"`` divides by ``beta`` times it.
    """
    if scaling == "stdev":
        b = 1.0
    elif scaling == "custom":
        if beta is None or beta <= 0:
            raise ValueError("custom scaling needs a positive beta")
        b = float(beta)
    else:
        raise ValueError(f"unknown scaling {scaling!r}")
    return normalize(x_samples(dist, cmap, n, replicas, seed), b)
