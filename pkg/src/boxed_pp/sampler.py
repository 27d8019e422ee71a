"""Perfect sampling by growing S one unit at a time.

The hexagon with ``S = 0`` has exactly one tiling.  A step ``S -> S+1``
builds the new path configuration slice by slice::

    Y(0) = (0, ..., N-1)
    for t = 0 .. T-1:
        compare Y(t) with X(t+1), particle by particle
            x - y = +1   -> z = x
            x - y = -1   -> z = y
            x = y        -> ties, grouped into runs of consecutive integers;
                            each run (k, l) draws xi ~ D(k, t, S; l): the
                            lowest xi keep z = x, the rest take z = x + 1
        Y(t+1) = z

The ``S -> S-1`` step is the mirror image with offsets {0, 1, 2} and the
distribution ``D_hat``.  Both steps preserve the weighted measure, so
``c`` up-steps from ``S = 0`` produce an exact sample.

The implementation is vectorized over a batch of independent chains.  Each
chain owns a Philox stream; at every step it draws a ``T x N`` block of
uniforms and the ``b``-th block of slice ``t`` consumes entry ``[t, b]``.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .chains import transition_row
from .numerics import normalize_log_weights
from .oracle import Tiling, check_tiling, final_slice, initial_slice
from .weights import (HexagonDims, InadmissibleParameters, QFactors, WeightParams, as_factors,
                      positivity_case)


def _factors(direction: str, x, t, S: int, N: int, T: int, fac: QFactors):
    """Numerator and denominator of the ratio between consecutive jump weights.

    ``x`` and ``t`` broadcast against each other.
    """
    x, t = np.broadcast_arrays(np.asarray(x), np.asarray(t))
    if direction == "up":
        num = fac.qf(x + T - t - S - 1) * fac.kf(x - S - t - 1) * fac.kf(2 * x - t - S + 1)
        den = (fac.qp(T - t - S - 1) * fac.qf(x + 1) * fac.kf(x - T + 1)
               * fac.kf(2 * x - t - S - 1))
    else:
        num = (fac.qp(t + 1 - S) * fac.qf(x - t - N - 1) * fac.kf(x + N - t - 1)
               * fac.kf(2 * x - t - S + 1))
        den = fac.qf(x - S - N + 1) * fac.kf(x + N - S + 1) * fac.kf(2 * x - t - S - 1)
    return np.broadcast_to(num, x.shape), np.broadcast_to(den, x.shape)


def _prefix(values, complex_phase: bool):
    """Prefix sums along the last axis: zero counts, log magnitudes and phases.

    Phases are kept as prefix sums of angles for complex input and as
    prefix counts of negative factors for real input.
    """
    zero = values == 0
    safe = np.where(zero, 1.0, values)
    pad = [(0, 0)] * (values.ndim - 1) + [(1, 0)]
    phase = np.angle(safe) if complex_phase else (safe.real < 0).astype(np.int64)
    return tuple(np.pad(np.cumsum(v, axis=-1), pad) for v in (zero, np.log(np.abs(safe)), phase))


class _JumpTables:
    """Prefix tables giving the log weight of every (block, xi) pair in O(1).

    Weights are written without poles as
    ``W(xi) = prod_{i<=xi} num(k+i-1) * prod_{xi<i<=l} den(k+i-1)``,
    which differs from the ratio form by the block constant ``prod den``.
    One row per slice index ``t`` in ``ts``.
    """

    def __init__(self, direction, xmax, ts, S, N, T, fac):
        self.t0 = int(ts[0])
        self.complex = fac.is_complex
        num, den = _factors(direction, np.arange(xmax + 1)[None, :], np.asarray(ts)[:, None], S, N, T, fac)
        self.num = _prefix(num, self.complex)
        self.den = _prefix(den, self.complex)

    def logs(self, k, l, j, t=None):
        """Log magnitudes (``-inf`` for zero weights) and phases of ``W``.

        The phase is a unit complex number, or +-1 for real weights.
        """
        r = 0 if t is None else t - self.t0
        parts = [(a[r][k + j] - a[r][k]) + (b[r][k + l] - b[r][k + j]) for a, b in zip(self.num, self.den)]
        zeros, mag, phase = parts
        mag = np.where(zeros > 0, -np.inf, mag)
        phase = np.exp(1j * phase) if self.complex else 1 - 2 * (phase % 2)
        return mag, phase


@dataclass
class JumpDistribution:
    x: int
    t: int
    S: int
    n: int
    probs: np.ndarray


def _jump(direction, x, t, S, n, dims, params) -> JumpDistribution:
    fac = as_factors(params)
    tables = _JumpTables(direction, x + n, [t], S, dims.N, dims.T, fac)
    mag, phase = tables.logs(x, n, np.arange(n + 1))
    try:
        probs = normalize_log_weights(mag + 1j * np.angle(phase))
    except ValueError as exc:
        raise InadmissibleParameters(f"jump distribution at x={x}, t={t}, S={S}: {exc}") from exc
    if probs.min() < -1e-12:
        raise InadmissibleParameters(f"jump distribution at x={x}, t={t}, S={S} has negative mass")
    return JumpDistribution(x, t, S, n, np.clip(probs, 0, None))


@functools.lru_cache(maxsize=1 << 16)
def _jump_probs(direction: str, x: int, t: int, S: int, n: int, N: int, T: int, params) -> np.ndarray:
    # step_law revisits the same blocks across many tilings
    return _jump(direction, x, t, S, n, HexagonDims(N, T - S, S), params).probs


def jump_D(x: int, t: int, S: int, n: int, dims: HexagonDims, params) -> JumpDistribution:
    """Law of ``xi`` on {0..n} for a tied run starting at ``x`` in an up-step."""
    return _jump("up", x, t, S, n, dims, params)


def jump_Dhat(x: int, t: int, S: int, n: int, dims: HexagonDims, params) -> JumpDistribution:
    """Law of ``xi`` on {0..n} for a tied run starting at ``x`` in a down-step."""
    return _jump("down", x, t, S, n, dims, params)


def _blocks(y: np.ndarray, x: np.ndarray, direction: str):
    """Tie mask and block structure for a batch of slice pairs (rows)."""
    d = x - y
    tie = d == (0 if direction == "up" else 1)
    prev_tie = np.zeros_like(tie)
    prev_tie[:, 1:] = tie[:, :-1] & (x[:, 1:] == x[:, :-1] + 1)
    start = tie & ~prev_tie
    return d, tie, start


def _update_slices(y, x, t, S, N, T, tables, uniforms, direction, trace=None):
    """One sequential update ``(Y(t), X(t+1)) -> Y(t+1)`` for a batch."""
    d, tie, start = _blocks(y, x, direction)
    if direction == "up":
        if np.abs(d).max(initial=0) > 1:
            raise ValueError("input slices do not come from an interlaced tiling")
        z = np.where(d == 1, x, y)
        low, high = x, x + 1
    else:
        if d.min(initial=0) < 0 or d.max(initial=0) > 2:
            raise ValueError("input slices do not come from an interlaced tiling")
        z = np.where(d == 0, x, y + 1)
        low, high = y, y + 1
    if not tie.any():
        return z
    M = y.shape[0]
    flat_tie = tie.ravel()
    flat_start = start.ravel()
    block_id = np.cumsum(flat_start) - 1
    starts = np.flatnonzero(flat_start)
    lengths = np.bincount(block_id[flat_tie], minlength=len(starts))
    rows = starts // N
    ks = x.ravel()[starts]
    ordinal = np.cumsum(start, axis=1) - 1
    block_ord = ordinal.ravel()[starts]
    u = uniforms[rows, block_ord]

    # log weights of xi = 0..l for every block, laid out flat
    seg_len = lengths + 1
    seg_start = np.concatenate([[0], np.cumsum(seg_len)[:-1]])
    seg_of = np.repeat(np.arange(len(starts)), seg_len)
    j = np.arange(seg_len.sum()) - seg_start[seg_of]
    logs, phase = tables.logs(ks[seg_of], lengths[seg_of], j, t)
    ref = np.maximum.reduceat(logs, seg_start)
    if not np.isfinite(ref).all():
        raise InadmissibleParameters(f"all jump weights vanish at t={t}, S={S}")
    w = np.exp(logs - ref[seg_of])
    # the nonzero weights of a block must share one phase (a common sign when real)
    finite = np.isfinite(logs)
    if tables.complex:
        anchor = np.zeros(len(starts), dtype=complex)
        np.add.at(anchor, seg_of, w * phase)
        rel = phase * np.conj(anchor / np.abs(anchor))[seg_of]
        mixed = (finite & ((np.abs(rel.imag) > 1e-8) | (rel.real < 0))).any()
    else:
        sgn = np.where(finite, phase, 0)
        mixed = (np.maximum.reduceat(sgn, seg_start) - np.minimum.reduceat(sgn, seg_start) > 1).any()
    if mixed:
        raise InadmissibleParameters(f"jump weights of mixed sign at t={t}, S={S}")
    csum = np.cumsum(w)
    before = np.concatenate([[0.0], csum])[seg_start]
    seg_cdf = csum - before[seg_of]
    totals = seg_cdf[seg_start + seg_len - 1]
    below = seg_cdf < u[seg_of] * totals[seg_of]
    xi = np.bincount(seg_of, weights=below, minlength=len(starts)).astype(int)
    xi = np.minimum(xi, lengths)

    if trace is not None:
        for r, k, l, v in zip(rows, ks, lengths, xi):
            if r == 0:
                trace.append((S, t, int(k), int(l), int(v)))

    rank = np.arange(M * N) - starts[np.maximum(block_id, 0)]
    keep_low = rank < xi[np.maximum(block_id, 0)]
    zt = np.where(keep_low, low.ravel(), high.ravel())
    z = z.ravel().copy()
    z[flat_tie] = zt[flat_tie]
    return z.reshape(M, N)


def _step_batch(X: np.ndarray, S: int, direction: str, fac: QFactors, uniforms: np.ndarray,
                trace: list | None = None) -> np.ndarray:
    """Apply one S-step to a batch ``X`` of shape (M, T+1, N)."""
    M, T1, N = X.shape
    T = T1 - 1
    Y = np.empty_like(X)
    Y[:, 0] = np.arange(N)
    tables = _JumpTables(direction, S + N + 2, np.arange(T), S, N, T, fac)
    for t in range(T):
        Y[:, t + 1] = _update_slices(Y[:, t], X[:, t + 1], t, S, N, T, tables, uniforms[:, t], direction,
                                     trace=trace)
    return Y


def _rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


@dataclass
class SamplerState:
    current: Tiling
    S: int
    rng: np.random.Generator
    dims_N: int
    dims_T: int

    @property
    def dims(self) -> HexagonDims:
        return HexagonDims(self.dims_N, self.dims_T - self.S, self.S)


def new_state(dims: HexagonDims, seed: int, tiling: Tiling | None = None) -> SamplerState:
    """Chain state at ``dims.S``; defaults to the unique tiling when ``S = 0``."""
    if tiling is None:
        if dims.S != 0:
            raise ValueError("a starting tiling is required when S > 0")
        tiling = Tiling(tuple(initial_slice(dims.N) for _ in range(dims.T + 1)))
    check_tiling(tiling.slices, dims)
    return SamplerState(tiling, dims.S, _rng(seed), dims.N, dims.T)


def step_S(state: SamplerState, direction: str, params: WeightParams, trace: list | None = None,
           method: str = "blocks", sweep: str = "forward") -> SamplerState:
    """Move the chain from ``S`` to ``S + 1`` (``"up"``) or ``S - 1`` (``"down"``).

    ``method="blocks"`` is the O(NT) block algorithm.  ``method="conditional"``
    draws each new slice from the explicit two-matrix conditional law; it is
    exponential in ``N`` and serves as a reference, and it is the only route
    that supports ``sweep="backward"`` (slices updated from ``t = T`` down).
    ``trace`` collects ``(S, t, k, l, xi)`` for every block draw.
    """
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    if method not in ("blocks", "conditional") or sweep not in ("forward", "backward"):
        raise ValueError(f"unknown method/sweep {method!r}/{sweep!r}")
    if method == "blocks" and sweep == "backward":
        raise ValueError("the block algorithm sweeps forward; use method='conditional'")
    S2 = state.S + (1 if direction == "up" else -1)
    if not 0 <= S2 <= state.dims_T:
        raise ValueError(f"cannot step from S={state.S} {direction}")
    check_tiling(state.current.slices, state.dims)
    fac = as_factors(params)
    if method == "conditional":
        new = _conditional_step(state.current, state.S, direction, state.dims_N, state.dims_T,
                                fac, state.rng, sweep)
    else:
        X = np.array(state.current.slices)[None]
        U = state.rng.random((1, state.dims_T, state.dims_N))
        Y = _step_batch(X, state.S, direction, fac, U, trace=trace)[0]
        new = Tiling(tuple(tuple(int(v) for v in row) for row in Y))
    check_tiling(new.slices, HexagonDims(state.dims_N, state.dims_T - S2, S2))
    return SamplerState(new, S2, state.rng, state.dims_N, state.dims_T)


def _check_params(dims: HexagonDims, params) -> None:
    # the interval rules do not depend on S; sign problems at intermediate
    # sizes surface as errors in the jump weights
    positivity_case(params, dims)


def sample_tilings_array(dims: HexagonDims, params: WeightParams, n: int, seed: int,
                         history: bool = False, trace: list | None = None):
    """``n`` independent exact samples as an int array of shape (n, T+1, N).

    Sample ``i`` depends only on ``(seed, i)``.  With ``history=True`` the
    array of intermediate states for ``S = 0..c`` is returned as well.
    ``trace`` collects ``(S, t, k, l, xi)`` for every block draw of sample 0.
    """
    _check_params(dims, params)
    fac = as_factors(params)
    N, T = dims.N, dims.T
    gens = [_rng(seed, i) for i in range(n)]
    X = np.tile(np.arange(N), (n, T + 1, 1))
    hist = [X.copy()] if history else None
    for S in range(dims.c):
        U = np.stack([g.random((T, N)) for g in gens])
        X = _step_batch(X, S, "up", fac, U, trace=trace)
        if history:
            hist.append(X.copy())
    return (X, hist) if history else X


def sample_tiling(dims: HexagonDims, params: WeightParams, seed: int) -> Tiling:
    """One exact sample; a deterministic function of ``seed``."""
    X = sample_tilings_array(dims, params, 1, seed)[0]
    return Tiling(tuple(tuple(int(v) for v in row) for row in X))


def _block_list(y, x, direction):
    d, tie, start = _blocks(np.array([y]), np.array([x]), direction)
    blocks = []
    for i in np.flatnonzero(start[0]):
        l = 1
        while i + l < len(x) and tie[0, i + l] and not start[0, i + l]:
            l += 1
        blocks.append((int(i), l))
    return d[0], blocks


@functools.lru_cache(maxsize=1 << 18)
def _slice_law(direction: str, prev: tuple, old: tuple, t: int, S: int, N: int, T: int, params) -> tuple:
    """Every ``(next slice, probability)`` of one sequential update."""
    y, x = np.array(prev), np.array(old)
    d, blocks = _block_list(y, x, direction)
    if direction == "up":
        base = np.where(d == 1, x, y)
        low, high = x, x + 1
    else:
        base = np.where(d == 0, x, y + 1)
        low, high = y, y + 1
    dists = [_jump_probs(direction, int(x[i]), t, S, l, N, T, params) for i, l in blocks]
    out = []
    for choice in itertools.product(*[range(len(p)) for p in dists]):
        z = base.copy()
        pr = 1.0
        for (i, l), xi, p in zip(blocks, choice, dists):
            pr *= p[xi]
            z[i:i + xi] = low[i:i + xi]
            z[i + xi:i + l] = high[i + xi:i + l]
        if pr != 0:
            out.append((tuple(int(v) for v in z), pr))
    return tuple(out)


def _step_law_raw(slices: tuple, S: int, direction: str, dims_N: int, dims_T: int, params) -> dict:
    states = {(initial_slice(dims_N),): 1.0}
    for t in range(dims_T):
        nxt = {}
        for prefix, prob in states.items():
            for z, pr in _slice_law(direction, prefix[-1], slices[t + 1], t, S, dims_N, dims_T, params):
                key = prefix + (z,)
                nxt[key] = nxt.get(key, 0.0) + prob * pr
        states = nxt
    return states


def step_law(tiling: Tiling, S: int, direction: str, dims_N: int, dims_T: int, params) -> dict:
    """Exact output law of the block algorithm, enumerating every draw of xi."""
    slices = tuple(tuple(xs) for xs in tiling.slices)
    return {Tiling(k): v for k, v in _step_law_raw(slices, S, direction, dims_N, dims_T, params).items()}


def _conditional_candidates(y, x_next, t: int, S: int, direction: str, sweep: str,
                            dims: HexagonDims, fac: QFactors) -> tuple[list, np.ndarray]:
    """Law of the next new slice given the last new slice ``y`` and the old slice ``x_next``.

    Forward sweep, up:  Z ~ P^{S+1,t}_{t+}(Y(t), Z) P^{S+1,t+1}_{S-}(Z, X(t+1)).
    Down swaps ``S+1, S-`` for ``S-1, S+``; the backward sweep uses ``t-``.
    """
    S2 = S + 1 if direction == "up" else S - 1
    back = "S-" if direction == "up" else "S+"
    move, t2 = ("t+", t + 1) if sweep == "forward" else ("t-", t - 1)
    cands, weights = [], []
    for Z, p in transition_row(move, y, dims, fac, S=S2, t=t).targets:
        if p == 0:
            continue
        w = p * transition_row(back, Z, dims, fac, S=S2, t=t2).as_dict().get(tuple(x_next), 0.0)
        if w > 0:
            cands.append(Z)
            weights.append(w)
    if not cands:
        raise ValueError("input slices do not come from an interlaced tiling")
    weights = np.array(weights)
    return cands, weights / weights.sum()


def _sweep_order(T: int, sweep: str):
    return [(t, t + 1) for t in range(T)] if sweep == "forward" else [(t, t - 1) for t in range(T, 0, -1)]


def _first_slice(N: int, S2: int, sweep: str) -> tuple:
    return initial_slice(N) if sweep == "forward" else final_slice(N, S2)


def step_law_conditional(tiling: Tiling, S: int, direction: str, dims_N: int, dims_T: int, params,
                         sweep: str = "forward") -> dict:
    """Exact output law built from the middle-point conditional of two transition matrices."""
    fac = as_factors(params)
    dims = HexagonDims(dims_N, dims_T - S, S)
    S2 = S + 1 if direction == "up" else S - 1
    X = tiling.slices
    states = {(_first_slice(dims_N, S2, sweep),): 1.0}
    for t, t2 in _sweep_order(dims_T, sweep):
        nxt = {}
        for prefix, prob in states.items():
            cands, probs = _conditional_candidates(prefix[-1], X[t2], t, S, direction, sweep, dims, fac)
            for Z, p in zip(cands, probs):
                key = prefix + (Z,)
                nxt[key] = nxt.get(key, 0.0) + prob * p
        states = nxt
    if sweep == "backward":
        return {Tiling(k[::-1]): v for k, v in states.items()}
    return {Tiling(k): v for k, v in states.items()}


def _conditional_step(tiling: Tiling, S: int, direction: str, dims_N: int, dims_T: int,
                      fac: QFactors, rng: np.random.Generator, sweep: str) -> Tiling:
    dims = HexagonDims(dims_N, dims_T - S, S)
    S2 = S + 1 if direction == "up" else S - 1
    out = [_first_slice(dims_N, S2, sweep)]
    for t, t2 in _sweep_order(dims_T, sweep):
        cands, probs = _conditional_candidates(out[-1], tiling.slices[t2], t, S, direction, sweep, dims, fac)
        idx = min(int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right")),
                  len(cands) - 1)
        out.append(tuple(int(v) for v in cands[idx]))
    return Tiling(tuple(out if sweep == "forward" else out[::-1]))


def push_forward(dist: dict, S: int, direction: str, dims_N: int, dims_T: int, params, law=step_law) -> dict:
    """Image of a distribution on tilings under one exact S-step."""
    out = {}
    if law is step_law:
        # raw slice tuples hash much faster than Tiling objects
        for til, p in dist.items():
            for key, p2 in _step_law_raw(til.slices, S, direction, dims_N, dims_T, params).items():
                out[key] = out.get(key, 0.0) + p * p2
        return {Tiling(k): v for k, v in out.items()}
    for til, p in dist.items():
        for til2, p2 in law(til, S, direction, dims_N, dims_T, params).items():
            out[til2] = out.get(til2, 0.0) + p * p2
    return out


def top_path(tiling, T: int | None = None) -> np.ndarray:
    """``u_t`` for ``t = 1..T``: the ``t``-th nonnegative integer missing from slice ``t``."""
    slices = getattr(tiling, "slices", tiling)
    slices = np.asarray(slices)
    T = len(slices) - 1 if T is None else T
    out = np.empty(T, dtype=int)
    for t in range(1, T + 1):
        occupied = set(int(v) for v in slices[t])
        count, x = 0, -1
        while count < t:
            x += 1
            if x not in occupied:
                count += 1
        out[t - 1] = x
    return out


def extract_top_path(history) -> np.ndarray:
    """Top-path sequence ``u^S_t`` (rows S = 0..len-1, columns t = 1..T)."""
    return np.array([top_path(h) for h in history])


@dataclass
class TopPathReport:
    """Exact comparison of the top-path process with the jump law ``D``.

    ``first_particle``: max deviation of particle 1's law from ``D(0, 0, S; u_1^S)``.
    ``stayed_previous``: same for particle ``t`` on the event that particle
    ``t - 1`` did not move, against ``D(u_{t-1}+1, t-1, S; u_t^S - u_{t-1} - 1)``.
    ``unconditional``: the same comparison without that restriction.
    ``markov_gap``: largest difference between the law of ``u^{S+1}`` given
    the whole top-path history and given ``u^S`` alone.
    In every law ``xi`` is the new position minus ``u_{t-1}^{S+1} + 1``.
    """

    first_particle: float
    stayed_previous: float
    unconditional: float
    markov_gap: float


def _as_key(path) -> tuple:
    return tuple(int(v) for v in path)


def top_path_report(dims: HexagonDims, params, law=step_law) -> TopPathReport:
    """Exact push-forward audit of the top-path projection over ``S = 0..c-1``."""
    N, T = dims.N, dims.T
    fac = as_factors(params)
    start = Tiling(tuple(initial_slice(N) for _ in range(T + 1)))
    joint = {(start, (_as_key(top_path(start)),)): 1.0}
    first = stayed = uncond = gap = 0.0
    for S in range(dims.c):
        sdims = HexagonDims(N, T - S, S)
        nxt = {}
        for (til, hist), p in joint.items():
            for til2, p2 in law(til, S, "up", N, T, fac).items():
                key = (til2, hist + (_as_key(top_path(til2)),))
                nxt[key] = nxt.get(key, 0.0) + p * p2
        pairs_all, pairs_stay, by_hist, by_last = {}, {}, {}, {}
        for (_, hist), p in nxt.items():
            old, new = hist[-2], hist[-1]
            by_hist.setdefault(hist[:-1], {}).setdefault(new, 0.0)
            by_hist[hist[:-1]][new] += p
            by_last.setdefault(old, {}).setdefault(new, 0.0)
            by_last[old][new] += p
            for t in range(1, min(S + 1, T) + 1):
                prev = new[t - 2] if t > 1 else -1
                key = (t, prev, old[t - 1])
                for table, ok in ((pairs_all, True), (pairs_stay, t == 1 or new[t - 2] == old[t - 2])):
                    if ok:
                        table.setdefault(key, {}).setdefault(new[t - 1], 0.0)
                        table[key][new[t - 1]] += p

        def deviation(table, only_first=False):
            worst = 0.0
            for (t, prev, cur), d in table.items():
                if only_first and t != 1:
                    continue
                probs = jump_D(prev + 1, t - 1, S, cur - prev - 1, sdims, fac).probs
                total = sum(d.values())
                for pos, pv in d.items():
                    worst = max(worst, abs(pv / total - probs[pos - prev - 1]))
            return worst

        first = max(first, deviation(pairs_all, only_first=True))
        stayed = max(stayed, deviation(pairs_stay))
        uncond = max(uncond, deviation(pairs_all))
        for hist, d in by_hist.items():
            ref = by_last[hist[-1]]
            tot, rtot = sum(d.values()), sum(ref.values())
            for k in set(d) | set(ref):
                gap = max(gap, abs(d.get(k, 0.0) / tot - ref.get(k, 0.0) / rtot))
        joint = nxt
    return TopPathReport(first, stayed, uncond, gap)
