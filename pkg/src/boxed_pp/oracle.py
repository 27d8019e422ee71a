"""Brute-force ground truth: every tiling of a small hexagon, one at a time.

A tiling is stored as its sequence of slices ``X(0), ..., X(T)``, each an
increasing N-tuple.  Consecutive slices interlace: ``X(t+1) - X(t)`` is a
0/1 vector.  Enumeration walks slice by slice and only enters states that
can still reach the fixed final slice, so the stream never backtracks.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, NamedTuple

import numpy as np

from .numerics import LogSignedValue, normalize_log_weights
from .weights import (
    HexagonDims,
    QHahn,
    QRacah,
    WeightParams,
    log_hole_weight_table,
    positivity_case,
    holes_of_slice,
)

DEFAULT_CAP = 10**7
CAP_ENV = "BOXED_PP_ORACLE_CAP"


class TooLarge(RuntimeError):
    """The requested enumeration exceeds the configured cap."""


class PathConfig(NamedTuple):
    t: int
    xs: tuple


@dataclass(frozen=True)
class Tiling:
    slices: tuple

    def __iter__(self):
        return iter(self.slices)

    def slice(self, t: int) -> PathConfig:
        return PathConfig(t, self.slices[t])

    def to_lines(self) -> str:
        """Serialize as one newline-terminated line of coordinates per slice."""
        return "".join(" ".join(str(x) for x in xs) + "\n" for xs in self.slices)

    @classmethod
    def from_lines(cls, text: str) -> "Tiling":
        rows = [line for line in text.splitlines() if line.strip()]
        return cls(tuple(tuple(int(v) for v in line.split()) for line in rows))


def oracle_cap() -> int:
    return int(os.environ.get(CAP_ENV, DEFAULT_CAP))


def initial_slice(N: int) -> tuple:
    return tuple(range(N))


def final_slice(N: int, S: int) -> tuple:
    return tuple(range(S, S + N))


def slice_states(N: int, T: int, S: int, t: int) -> list[tuple]:
    """All increasing N-tuples in the section at time ``t``."""
    lo = max(0, t + S - T)
    hi = min(t + N - 1, S + N - 1)
    return list(itertools.combinations(range(lo, hi + 1), N))


def up_successors(xs: tuple, lo: int, hi: int) -> list[tuple]:
    """Tuples ``xs + d`` with ``d`` in {0,1}^N, strictly increasing, inside [lo, hi]."""
    out = []
    N = len(xs)

    def rec(i, acc):
        if i == N:
            out.append(tuple(acc))
            return
        for d in (0, 1):
            y = xs[i] + d
            if y < lo or y > hi or (acc and y <= acc[-1]):
                continue
            acc.append(y)
            rec(i + 1, acc)
            acc.pop()

    rec(0, [])
    return out


def check_tiling(slices, dims: HexagonDims) -> None:
    """Raise ``ValueError`` unless ``slices`` is a tiling of ``dims``."""
    N, T, S = dims.N, dims.T, dims.S
    if len(slices) != T + 1:
        raise ValueError(f"expected {T + 1} slices, got {len(slices)}")
    if tuple(slices[0]) != initial_slice(N) or tuple(slices[T]) != final_slice(N, S):
        raise ValueError("boundary slices do not match the hexagon")
    for t, xs in enumerate(slices):
        lo, hi = dims.section(t)
        if len(xs) != N or any(b <= a for a, b in zip(xs, xs[1:])) or xs[0] < lo or xs[-1] > hi:
            raise ValueError(f"slice {t} is not an increasing tuple inside the section")
        if t and any(y - x not in (0, 1) for x, y in zip(slices[t - 1], xs)):
            raise ValueError(f"slices {t - 1} and {t} do not interlace")


@lru_cache(maxsize=64)
def _suffix_graph(N: int, T: int, S: int):
    """Viable successor lists and suffix counts, built backwards from t = T."""
    succ = [dict() for _ in range(T + 1)]
    count = [dict() for _ in range(T + 1)]
    count[T][final_slice(N, S)] = 1
    for t in range(T - 1, -1, -1):
        lo, hi = max(0, t + 1 + S - T), min(t + N, S + N - 1)
        for xs in slice_states(N, T, S, t):
            nxt = [y for y in up_successors(xs, lo, hi) if y in count[t + 1]]
            if nxt:
                succ[t][xs] = nxt
                count[t][xs] = sum(count[t + 1][y] for y in nxt)
    return succ, count


def count_tilings(dims: HexagonDims) -> int:
    """Number of tilings from the suffix-count table (no enumeration)."""
    _, count = _suffix_graph(dims.N, dims.T, dims.S)
    return count[0].get(initial_slice(dims.N), 0)


def macmahon_count(a: int, b: int, c: int) -> int:
    """``prod_{i,j,k} (i+j+k-1)/(i+j+k-2)`` evaluated exactly."""
    num = den = 1
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            for k in range(1, c + 1):
                num *= i + j + k - 1
                den *= i + j + k - 2
    assert num % den == 0
    return num // den


def enumerate_tilings(dims: HexagonDims, cap: int | None = None) -> Iterator[Tiling]:
    """Yield every tiling exactly once, in lexicographic slice order."""
    cap = oracle_cap() if cap is None else cap
    total = count_tilings(dims)
    if total > cap:
        raise TooLarge(f"{total} tilings exceed the cap {cap}")
    succ, _ = _suffix_graph(dims.N, dims.T, dims.S)
    T = dims.T
    path = [initial_slice(dims.N)]

    def rec(t):
        if t == T:
            yield Tiling(tuple(path))
            return
        for y in succ[t][path[-1]]:
            path.append(y)
            yield from rec(t + 1)
            path.pop()

    yield from rec(0)


def log_weights(tilings, dims: HexagonDims, params: WeightParams) -> np.ndarray:
    """Log tiling weights for a list of tilings (admissibility checked once)."""
    positivity_case(params, dims)
    table = log_hole_weight_table(params, dims)
    holes_cache = {}
    out = np.empty(len(tilings))
    for k, til in enumerate(tilings):
        total = 0.0
        for t in range(1, dims.T):
            xs = til.slices[t]
            key = (t, xs)
            v = holes_cache.get(key)
            if v is None:
                lo, hi = dims.section(t)
                v = sum(table[(t, x)] for x in holes_of_slice(xs, lo, hi))
                holes_cache[key] = v
            total += v
        out[k] = total
    return out


def exact_distribution_arrays(dims: HexagonDims, params: WeightParams):
    """All tilings and their exact probabilities as parallel containers."""
    tilings = list(enumerate_tilings(dims))
    return tilings, normalize_log_weights(log_weights(tilings, dims, params))


def exact_distribution(dims: HexagonDims, params: WeightParams) -> dict:
    """Map each tiling to its probability ``w(T) / sum w``."""
    tilings, probs = exact_distribution_arrays(dims, params)
    return dict(zip(tilings, probs))


def slice_marginals(dims: HexagonDims, params: WeightParams) -> list[dict]:
    """Law of ``X(t)`` for every t, by marginalizing the exact distribution."""
    tilings, probs = exact_distribution_arrays(dims, params)
    out = [dict() for _ in range(dims.T + 1)]
    for til, p in zip(tilings, probs):
        for t, xs in enumerate(til.slices):
            out[t][xs] = out[t].get(xs, 0.0) + p
    return out


def point_correlations(dims: HexagonDims, params: WeightParams, points) -> float:
    """Probability that every ``(t, x)`` in ``points`` carries a path."""
    tilings, probs = exact_distribution_arrays(dims, params)
    total = 0.0
    for til, p in zip(tilings, probs):
        if all(x in til.slices[t] for t, x in points):
            total += p
    return total


def _mu(q, k2, t, S, x):
    return q ** (-x) + k2 * q ** (x - S - t + 1)


def _vandermonde(vals) -> LogSignedValue:
    out = LogSignedValue.one()
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            out = out * (vals[i] - vals[j])
    return out


def _qpoch_log(a, q, n) -> LogSignedValue:
    out = LogSignedValue.one()
    term = a
    for _ in range(n):
        out = out * (1 - term)
        term *= q
    return out


def partial_weight_sums(dims: HexagonDims, params, t: int, X) -> tuple:
    """Closed forms for the left, central and right weight sums at slice ``t``.

    Each entry is correct up to a factor that depends on ``t`` but not on
    ``X``, so only ratios across configurations of one slice are meaningful.
    """
    if isinstance(params, QHahn):
        q, k2 = params.q, 0.0
    elif isinstance(params, QRacah):
        q, k2 = params.q, params.kappa_sq
    else:
        raise TypeError("partial weight sums are implemented for q-Racah and q-Hahn weights")
    xs = tuple(getattr(X, "xs", X))
    N, T, S = dims.N, dims.T, dims.S
    mus = [_mu(q, k2, t, S, x) for x in xs]
    for i in range(N):
        for j in range(i + 1, N):
            if mus[i] == mus[j]:
                from .weights import DegenerateParameters

                raise DegenerateParameters("two sites share a lattice value")
    vdm = _vandermonde(mus)
    L = vdm
    R = vdm
    C = LogSignedValue.one()
    for x in xs:
        den_factor = 1 - k2 * q ** (2 * x - S - t + 1)
        L = L * LogSignedValue.from_value(den_factor) * LogSignedValue(x * (t + N - 1) * math.log(q), 1)
        L = L / (_qpoch_log(1 / q, 1 / q, t + N - 1 - x) * _qpoch_log(q, q, x)
                 * _qpoch_log(k2 * q ** (x - t - S + 1), q, t + N))
        R = R * LogSignedValue.from_value(den_factor) * LogSignedValue(x * (T - t + N - 1) * math.log(q), 1)
        R = R / (_qpoch_log(1 / q, 1 / q, S + N - 1 - x) * _qpoch_log(q, q, x + T - t - S)
                 * _qpoch_log(k2 * q ** (x - T + 1), q, N + T - t))
        C = C * LogSignedValue(x * math.log(q), 1) / LogSignedValue.from_value(den_factor)
    return L, C, R


def tiling_to_plane_partition(tiling, dims: HexagonDims) -> np.ndarray:
    """Heights of the a x b plane partition encoded by a tiling.

    Path ``i`` makes ``b`` flat steps; the number ``u`` of up steps it has
    taken before its ``l``-th flat step is nondecreasing in both ``l`` and
    ``i``, so ``c - u`` is a plane partition.  With this orientation the
    q-Hahn weight is proportional to ``q^(-volume)``.
    """
    slices = getattr(tiling, "slices", tiling)
    a, b = dims.a, dims.b
    h = np.zeros((a, b), dtype=int)
    for i in range(a):
        flats = 0
        for t in range(dims.T):
            step = slices[t + 1][i] - slices[t][i]
            if step == 0:
                h[i, flats] = slices[t][i] - i
                flats += 1
    return dims.c - h


def plane_partition_to_tiling(pp, dims: HexagonDims) -> Tiling:
    """Inverse of :func:`tiling_to_plane_partition`."""
    a, b, c = dims.a, dims.b, dims.c
    h = c - np.asarray(pp)
    paths = []
    for i in range(a):
        xs = [i]
        ups = 0
        for l in range(b):
            while ups < h[i, l]:
                ups += 1
                xs.append(i + ups)
            xs.append(i + ups)
        while ups < c:
            ups += 1
            xs.append(i + ups)
        paths.append(xs)
    slices = tuple(tuple(paths[i][t] for i in range(a)) for t in range(dims.T + 1))
    return Tiling(slices)


def enumerate_plane_partitions(a: int, b: int, c: int) -> Iterator[np.ndarray]:
    """All a x b arrays with entries in [0, c], weakly decreasing along rows and columns."""
    cells = [(i, j) for i in range(a) for j in range(b)]
    arr = np.zeros((a, b), dtype=int)

    def rec(k):
        if k == len(cells):
            yield arr.copy()
            return
        i, j = cells[k]
        top = c
        if i > 0:
            top = min(top, arr[i - 1, j])
        if j > 0:
            top = min(top, arr[i, j - 1])
        for v in range(top + 1):
            arr[i, j] = v
            yield from rec(k + 1)
        arr[i, j] = 0

    yield from rec(0)


def has_lozenge(tiling: Tiling, left, right) -> bool:
    """Whether the lozenge joining triangles ``left=(t, x)`` and ``right=(r, y)`` is present."""
    (t, x), (r, y) = left, right
    slices = tiling.slices
    if (r, y) == (t, x):
        return x not in slices[t]
    if r != t + 1 or y - x not in (0, 1) or x not in slices[t]:
        return False
    return slices[t + 1][slices[t].index(x)] == y


def lozenge_probability(dims: HexagonDims, params: WeightParams, lozenges) -> float:
    """Probability that every lozenge in ``lozenges`` appears."""
    tilings, probs = exact_distribution_arrays(dims, params)
    return float(sum(p for til, p in zip(tilings, probs) if all(has_lozenge(til, a, b) for a, b in lozenges)))
