"""Cooling maps, effective increments and weight vectors.

A cooling map is given by its increments ``T_1, T_2, ...`` (all ``>= 1``);
``tau(k) = T_1 + ... + T_k`` are the resampling times and ``ell(n)`` counts
the completed blocks by time ``n``.  Prefix sums are kept in ``int64`` and
every extension is checked for overflow.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import (
    CoolingOverflowError,
    HorizonError,
    IllPosedError,
    MissingVarianceError,
    NormExceededError,
)

INT64_MAX = (1 << 63) - 1
SNAP_RTOL = 1e-12
NORM_TOL = 1e-9


def snapped_ceil(y: float) -> int:
    """``ceil(y)``, except that values within relative ``1e-12`` of an integer
    snap to it.  Floating evaluation of e.g. ``(sqrt(3) * sqrt(2))**2`` lands
    a hair above 6, and a bare ceiling would turn that into 7."""
    if not math.isfinite(y):
        raise CoolingOverflowError(f"increment {y!r} is not finite")
    r = round(y)
    if abs(y - r) <= SNAP_RTOL * max(1.0, abs(y)):
        return int(r)
    return math.ceil(y)


def _snapped_ceil_array(y: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(y)) or np.any(y >= 2.0**63):
        raise CoolingOverflowError("cooling increment exceeds the int64 range")
    r = np.round(y)
    snap = np.abs(y - r) <= SNAP_RTOL * np.maximum(1.0, np.abs(y))
    return np.where(snap, r, np.ceil(y)).astype(np.int64)


class CoolingMap:
    """Base class; subclasses define ``_increments(k0, k1)`` for ``k`` in ``[k0, k1)``."""

    family = "abstract"
    #: largest admissible block index, or None when unbounded
    max_index: int | None = None

    def __init__(self):
        self._cum = np.zeros(1, dtype=np.int64)

    # -- generator ---------------------------------------------------------
    def _increments(self, k0: int, k1: int) -> np.ndarray:
        return np.array([self._increment(k) for k in range(k0, k1)], dtype=np.int64)

    def _increment(self, k: int) -> int:
        raise NotImplementedError

    def increment(self, k: int) -> int:
        """``T_k`` for ``k >= 1``."""
        if k < 1:
            raise ValueError("increments are indexed from 1")
        self._extend_to(k)
        return int(self._cum[k] - self._cum[k - 1])

    def increments(self, kmax: int) -> np.ndarray:
        """``[T_1, ..., T_kmax]``."""
        self._extend_to(kmax)
        return np.diff(self._cum[: kmax + 1])

    # -- prefix sums -------------------------------------------------------
    def _extend_to(self, k: int):
        have = len(self._cum) - 1
        if k <= have:
            return
        if self.max_index is not None and k > self.max_index:
            raise CoolingOverflowError(
                f"{self.family} map only defines blocks up to k={self.max_index}"
            )
        new = max(k, 2 * have, 64)
        if self.max_index is not None:
            new = min(new, self.max_index)
        t = np.asarray(self._increments(have + 1, new + 1), dtype=np.int64)
        if np.any(t < 1):
            raise ValueError(f"{self.family} map produced an increment below 1")
        cum = np.cumsum(t, dtype=np.int64) + self._cum[-1]
        # a wrapped int64 sum shows up as a non-increasing step
        if cum[0] <= self._cum[-1] or np.any(np.diff(cum) <= 0):
            raise CoolingOverflowError(f"tau overflows int64 before k={new}")
        self._cum = np.concatenate([self._cum, cum])

    def tau(self, k: int) -> int:
        if k < 0:
            raise ValueError("k must be non-negative")
        self._extend_to(k)
        return int(self._cum[k])

    def ell(self, n: int) -> int:
        """Number of completed blocks by time ``n``: ``max{l : tau(l) <= n}``."""
        if n < 0:
            raise ValueError("n must be non-negative")
        while self._cum[-1] <= n:
            have = len(self._cum) - 1
            if self.max_index is not None and have >= self.max_index:
                if self._cum[-1] == n:
                    return have
                raise HorizonError(f"time {n} lies past the last block of the {self.family} map")
            self._extend_to(have + 1 if self.max_index is not None else max(2 * have, 64))
        return int(np.searchsorted(self._cum, n, side="right")) - 1

    def effective_increments(self, n: int) -> np.ndarray:
        """``[T_1, ..., T_l, n - tau(l)]`` with ``l = ell(n)``; a zero last entry is dropped."""
        l = self.ell(n)
        head = np.diff(self._cum[: l + 1])
        rest = n - int(self._cum[l])
        if rest:
            head = np.append(head, np.int64(rest))
        return head

    def increment_counts(self, n: int) -> dict[int, int]:
        """Multiset of effective increments as ``{T: count}``, sorted by ``T``."""
        values, counts = np.unique(self.effective_increments(n), return_counts=True)
        return {int(t): int(c) for t, c in zip(values, counts)}

    def describe(self) -> dict:
        return {"family": self.family}

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "family")
        return f"{type(self).__name__}({params})"


class Constant(CoolingMap):
    family = "constant"

    def __init__(self, T: int = 1):
        super().__init__()
        if int(T) != T or T < 1:
            raise ValueError("constant increment must be a positive integer")
        self.T = int(T)

    def _increments(self, k0, k1):
        return np.full(k1 - k0, self.T, dtype=np.int64)

    def tau(self, k):
        if k < 0:
            raise ValueError("k must be non-negative")
        if k * self.T > INT64_MAX:
            raise CoolingOverflowError("tau overflows int64")
        return k * self.T

    def ell(self, n):
        if n < 0:
            raise ValueError("n must be non-negative")
        return n // self.T

    def effective_increments(self, n):
        l, rest = divmod(n, self.T)
        out = np.full(l + (1 if rest else 0), self.T, dtype=np.int64)
        if rest:
            out[-1] = rest
        return out

    def describe(self):
        return {"family": self.family, "T": self.T}


class Polynomial(CoolingMap):
    """``T_k = max(1, ceil(A k**alpha))``."""

    family = "polynomial"

    def __init__(self, A: float, alpha: float):
        super().__init__()
        if A <= 0 or alpha <= 0:
            raise ValueError("polynomial cooling needs A > 0 and alpha > 0")
        self.A, self.alpha = float(A), float(alpha)

    def _increments(self, k0, k1):
        k = np.arange(k0, k1, dtype=np.float64)
        return np.maximum(1, _snapped_ceil_array(self.A * k**self.alpha))

    def describe(self):
        return {"family": self.family, "A": self.A, "alpha": self.alpha}


class Exponential(CoolingMap):
    """``T_k = max(1, ceil(C exp(c k)))``."""

    family = "exponential"

    def __init__(self, C: float, c: float):
        super().__init__()
        if C <= 0 or c <= 0:
            raise ValueError("exponential cooling needs C > 0 and c > 0")
        self.C, self.c = float(C), float(c)
        self.max_index = int((math.log(2.0**62) - math.log(self.C)) / self.c)

    def _increments(self, k0, k1):
        k = np.arange(k0, k1, dtype=np.float64)
        return np.maximum(1, _snapped_ceil_array(self.C * np.exp(self.c * k)))

    def describe(self):
        return {"family": self.family, "C": self.C, "c": self.c}


class SuperExp(CoolingMap):
    """``tau(k) = ceil(base ** exp(c k))``, so ``log T_k`` grows like ``exp(c k)``.

    ``base=2, c=log 2`` gives ``tau(k) = 2**(2**k)``.
    """

    family = "superexp"

    def __init__(self, c: float, base: float = math.e):
        super().__init__()
        if c <= 0 or base <= 1:
            raise ValueError("super-exponential cooling needs c > 0 and base > 1")
        self.c, self.base = float(c), float(base)
        k = 0
        while self._tau_exact(k + 1) <= INT64_MAX:
            k += 1
        self.max_index = k

    def _tau_exact(self, k: int) -> int:
        if k == 0:
            return 0
        y = math.exp(self.c * k)
        if self.base == int(self.base) and abs(y - round(y)) <= SNAP_RTOL * y:
            e = round(y)
            if e * math.log2(self.base) > 200:
                return INT64_MAX + 1
            return int(self.base) ** e
        logv = y * math.log(self.base)
        if logv > 200:
            return INT64_MAX + 1
        return snapped_ceil(math.exp(logv))

    def _increments(self, k0, k1):
        taus = [self._tau_exact(k) for k in range(k0 - 1, k1)]
        return np.array([b - a for a, b in zip(taus, taus[1:])], dtype=np.int64)

    def describe(self):
        return {"family": self.family, "c": self.c, "base": self.base}


class Interweaved(CoolingMap):
    """Unit blocks with sparse long blocks.

    ``rule="mixture"``: ``T_{2^i} = floor(2^((i-1)/(2 kappa)))`` for ``i >= 1``.
    ``rule="oscillation"``: ``T_{r_i} = m_i`` with ``m_i = 2^(2^i)``, ``r_i = i m_i``.
    All other increments are 1.
    """

    family = "interweaved"

    def __init__(self, rule: str, kappa: float | None = None):
        super().__init__()
        self.rule = rule
        if rule == "mixture":
            if kappa is None or not 0 < kappa < 1:
                raise ValueError("the mixture rule needs kappa in (0, 1)")
            self.kappa = float(kappa)
            self._special = {}
            i = 1
            while (1 << i) <= INT64_MAX and (i - 1) / (2 * self.kappa) < 62:
                self._special[1 << i] = max(1, math.floor(2.0 ** ((i - 1) / (2 * self.kappa))))
                i += 1
            self.max_index = 1 << (i - 1)
        elif rule == "oscillation":
            self.kappa = kappa
            self._special = {i * (1 << (1 << i)): 1 << (1 << i) for i in range(1, 6)}
            self.max_index = 6 * (1 << 32)  # m_6 = 2^64 no longer fits
        else:
            raise ValueError(f"unknown interweaving rule {rule!r}")

    def _increments(self, k0, k1):
        out = np.ones(k1 - k0, dtype=np.int64)
        for k, t in self._special.items():
            if k0 <= k < k1:
                out[k - k0] = t
        return out

    def oscillation_index(self, j: int, t: float) -> int:
        """``r_j + floor(t m_j log m_j)``; the horizon is ``tau`` of this."""
        if self.rule != "oscillation":
            raise ValueError("only defined for the oscillation rule")
        m = 1 << (1 << j)
        return j * m + math.floor(t * m * math.log(m))

    def describe(self):
        d = {"family": self.family, "rule": self.rule}
        if self.kappa is not None:
            d["kappa"] = self.kappa
        return d


class Custom(CoolingMap):
    """Explicit finite list of increments."""

    family = "custom"

    def __init__(self, increments):
        super().__init__()
        t = [int(x) for x in increments]
        if not t:
            raise ValueError("a custom map needs at least one increment")
        if any(x < 1 for x in t):
            raise ValueError("increments must be positive integers")
        if any(x > INT64_MAX for x in t) or sum(t) > INT64_MAX:
            raise CoolingOverflowError("custom map does not fit in int64")
        self._T = tuple(t)
        self.max_index = len(t)
        self._extend_to(len(t))

    def _increments(self, k0, k1):
        return np.array(self._T[k0 - 1 : k1 - 1], dtype=np.int64)

    @classmethod
    def from_file(cls, path):
        values = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not an integer: {line!r}") from None
        return cls(values)

    def describe(self):
        return {"family": self.family, "T": list(self._T)}


class MixtureDesigned(Custom):
    """Finite prefix of a map built by :func:`construct_mixture_map`."""

    family = "mixture_designed"

    def __init__(self, increments, lambda_star, kappa, case, N):
        super().__init__(increments)
        self.lambda_star = lambda_star
        self.kappa = kappa
        self.case = case
        self.N = tuple(N)

    @property
    def n_j(self) -> list[int]:
        return [self.tau(n) for n in self.N]

    def describe(self):
        return {
            "family": self.family,
            "lambda_star": [float(x) for x in self.lambda_star.weights],
            "kappa": self.kappa,
            "case": self.case,
            "n_j": self.n_j,
        }


def export_map(cmap: CoolingMap, path, kmax: int | None = None):
    """Write ``T_1..T_kmax`` one per line and a ``.json`` sidecar next to it."""
    path = Path(path)
    if kmax is None:
        if cmap.max_index is None:
            raise ValueError("kmax is required for an unbounded map")
        kmax = cmap.max_index
    path.write_text("".join(f"{int(t)}\n" for t in cmap.increments(kmax)))
    meta = cmap.describe()
    meta.pop("T", None)
    meta["blocks"] = kmax
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


# ---------------------------------------------------------------- weight vectors


class LambdaVector:
    """Non-negative weights ``lambda(1), lambda(2), ...``.

    Only finitely many weights are stored; ``tail_norm2`` carries the
    squared l2 mass of any weights beyond them.
    """

    __slots__ = ("weights", "tail_norm2")

    def __init__(self, weights, tail_norm2: float = 0.0):
        w = np.array(weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if tail_norm2 < 0:
            raise ValueError("tail mass must be non-negative")
        w.setflags(write=False)
        self.weights = w
        self.tail_norm2 = float(tail_norm2)

    @classmethod
    def from_function(cls, f: Callable[[int], float], head: int = 64, norm2: float | None = None):
        """First ``head`` values of ``f`` and the tail mass ``norm2 - sum(head**2)``.

        Without ``norm2`` the tail is summed until terms stop mattering.
        """
        w = [float(f(k)) for k in range(1, head + 1)]
        h2 = math.fsum(x * x for x in w)
        if norm2 is None:
            tail, k = [], head + 1
            while k < head + 10**6:
                x = float(f(k))
                tail.append(x * x)
                if x * x < 1e-18 * max(h2, 1e-300) and k > 2 * head:
                    break
                k += 1
            tail2 = math.fsum(tail)
        else:
            tail2 = max(0.0, norm2 - h2)
        return cls(w, tail2)

    @property
    def norm2(self) -> float:
        return math.fsum(self.weights**2) + self.tail_norm2

    @property
    def sorted(self) -> np.ndarray:
        return np.sort(self.weights)[::-1]

    def head(self, k: int) -> np.ndarray:
        """First ``k`` weights of the sorted view, zero-padded."""
        s = self.sorted[:k]
        return np.pad(s, (0, k - len(s)))

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, k):
        return self.weights[k]

    def __repr__(self):
        head = ", ".join(f"{x:.4g}" for x in self.weights[:6])
        more = ", ..." if len(self.weights) > 6 else ""
        return f"LambdaVector([{head}{more}], norm2={self.norm2:.6g})"


def a_of_lambda(lam: LambdaVector) -> float:
    """Weight of the Gaussian remainder, ``sqrt(1 - sum lambda^2)``."""
    s = lam.norm2
    if s > 1 + NORM_TOL:
        raise NormExceededError(f"sum of squared weights is {s!r} > 1")
    return math.sqrt(max(0.0, 1.0 - s))


def tilde_lambda(cmap: CoolingMap, n: int, kappa: float) -> LambdaVector:
    """``T_{k,n}**kappa / V_n`` over the effective increments."""
    if not 0 < kappa < 1:
        raise ValueError("tilde_lambda is defined for kappa in (0, 1)")
    if n < 1:
        raise ValueError("n must be positive")
    t = cmap.effective_increments(n).astype(np.float64)
    p = t**kappa
    return LambdaVector(p / math.sqrt(math.fsum(p * p)))


def empirical_lambda(cmap: CoolingMap, n: int, variance_lookup) -> LambdaVector:
    """``sqrt(Var Z_{T_{k,n}} / sum_j Var Z_{T_{j,n}})`` from per-increment variances.

    ``variance_lookup`` is a mapping or a callable ``T -> variance``.
    """
    counts = cmap.increment_counts(n)
    var = {}
    for t in counts:
        try:
            var[t] = float(variance_lookup[t] if isinstance(variance_lookup, Mapping) else variance_lookup(t))
        except KeyError:
            raise MissingVarianceError(f"no variance estimate for increment T={t}") from None
    total = math.fsum(var[t] * c for t, c in counts.items())
    if total <= 0:
        raise ValueError("total variance must be positive")
    inc = cmap.effective_increments(n)
    w = np.array([var[int(t)] for t in inc]) / total
    return LambdaVector(np.sqrt(w))


# ---------------------------------------------------------------- mixture designer


@dataclass(frozen=True)
class DesignRound:
    j: int
    N: int
    designed: int
    fillers: int
    V: float


def construct_mixture_map(lambda_star: LambdaVector, kappa: float, rounds: int = 8, case: str = "auto"):
    """Cooling map whose ``tilde_lambda`` along ``n_j = tau(N_j)`` tends to ``lambda_star``.

    Returns ``(map, n_j)`` where ``n_j`` lists ``tau(N_1), ..., tau(N_rounds)``.

    Case I (all weights positive): round ``j`` appends ``j`` designed blocks
    ``ceil((V_{j-1} lambda(l) / lambda(j))**(1/kappa))`` and
    ``K_j = floor((a / lambda(j))**2)`` fillers ``ceil(V_{j-1}**(1/kappa))``.

    Case II (support ``{1..k0}``): round ``j`` appends ``k0`` designed blocks
    ``ceil((j V_{j-1} lambda(l))**(1/kappa))`` and ``floor((j a)**2)``
    fillers.  Rounds with ``j < ceil(1/lambda(k0))`` are filler-only, since
    the designed blocks only dominate the earlier ones from there on.

    ``V_j`` is the l2 norm of ``T**kappa`` over all blocks so far, ``V_0 = 1``.
    """
    if not 0 < kappa < 1:
        raise ValueError("the mixture designer needs kappa in (0, 1)")
    w = lambda_star.weights
    if np.any(np.diff(w) > 0):
        raise ValueError("lambda_star must be non-increasing")
    a = a_of_lambda(lambda_star)
    nz = np.nonzero(w)[0]
    finite_support = lambda_star.tail_norm2 == 0.0 and (len(nz) == 0 or nz[-1] + 1 < len(w))
    if case == "auto":
        case = "II" if finite_support else "I"
    inv = 1.0 / kappa
    T: list[int] = []
    N = [0]
    V = 1.0

    def lam(k):
        if k > len(w):
            raise ValueError(f"lambda_star lists {len(w)} weights; round {k} needs more")
        return float(w[k - 1])

    if case == "I":
        for j in range(1, rounds + 1):
            lj = lam(j)
            if lj == 0.0:
                raise IllPosedError(f"case I needs lambda({j}) > 0 (a = {a:.6g})")
            K = math.floor((a / lj) ** 2)
            designed = [snapped_ceil((V * lam(l) / lj) ** inv) for l in range(1, j + 1)]
            filler = snapped_ceil(V**inv)
            T.extend(designed)
            T.extend([filler] * K)
            N.append(N[-1] + j + K)
            V = math.sqrt(math.fsum(float(t) ** (2 * kappa) for t in T))
    elif case == "II":
        if len(nz) == 0:
            raise IllPosedError("case II needs at least one positive weight")
        k0 = int(nz[-1]) + 1
        j0 = math.ceil(1.0 / lam(k0) - SNAP_RTOL)
        for j in range(1, rounds + 1):
            K = math.floor((j * a) ** 2)
            filler = snapped_ceil(V**inv)
            if j >= j0:
                T.extend(snapped_ceil((j * V * lam(l)) ** inv) for l in range(1, k0 + 1))
            else:
                T.extend([filler] * k0)
            T.extend([filler] * K)
            N.append(N[-1] + k0 + K)
            V = math.sqrt(math.fsum(float(t) ** (2 * kappa) for t in T))
    else:
        raise ValueError(f"unknown case {case!r}")
    if any(t > INT64_MAX for t in T) or sum(T) > INT64_MAX:
        raise CoolingOverflowError("designed map overflows int64; use fewer rounds")
    cmap = MixtureDesigned(T, lambda_star, kappa, case, N[1:])
    return cmap, cmap.n_j


def build_map(family: str, **params) -> CoolingMap:
    """Factory used by the config layer."""
    table = {
        "constant": Constant,
        "polynomial": Polynomial,
        "exponential": Exponential,
        "superexp": SuperExp,
        "interweaved": Interweaved,
        "custom": Custom,
    }
    if family == "custom" and "file" in params:
        return Custom.from_file(params["file"])
    try:
        cls = table[family]
    except KeyError:
        raise ValueError(f"unknown cooling family {family!r}") from None
    return cls(**params)
