"""Slice laws and the four families of stochastic matrices.

The law of ``X(t)`` for a hexagon with parameters ``(N, T, S)`` is

    rho_{S,t}(X)  ~  prod_{i<j} (mu(x_i) - mu(x_j))^2 * prod_i w_{t,S}(x_i)

and the four matrices move one slice at a time, either in ``t`` (``t+``,
``t-``) or in ``S`` (``S+``, ``S-``).  Each row is a Vandermonde ratio times
per-particle factors ``w_1`` (particle moves) or ``w_0`` (particle stays);
rows are normalized by explicit summation, so no closed-form constants are
needed.

All products are accumulated as complex logarithms: that handles sign
bookkeeping, overflow, and the trigonometric family (where ``q`` and
``kappa^2`` live on the unit circle) with one code path.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .numerics import LogSignedValue, normalize_log_weights
from .oracle import PathConfig, slice_states
from .weights import (
    HexagonDims,
    InadmissibleParameters,
    QFactors,
    as_factors,
    WeightParams,
    positivity_case,
    section_bounds,
)

KINDS = ("t+", "t-", "S+", "S-")


def _clog(values) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(np.asarray(values, dtype=complex))


_factors = as_factors


def mu(t: int, S: int, x, params):
    """Lattice function ``q^-x + kappa^2 q^(x-S-t+1)`` (or its q = 1 limit)."""
    return _factors(params).mu(x, t, S)


def log_slice_weights(t: int, S: int, N: int, T: int, xs, params) -> np.ndarray:
    """Complex log of ``w_{t,S}(x)`` for each x in ``xs``."""
    fac = _factors(params)
    out = []
    for x in np.atleast_1d(xs):
        x = int(x)
        log_q = 0.0 if fac.classical else np.log(complex(fac.q))
        val = x * (2 * N + T - 1) * log_q
        val += _clog(fac.kf(2 * x - t - S + 1))
        val -= _clog(fac.qf(np.arange(1, x + 1))).sum()
        val -= _clog(fac.qf(np.arange(1, T - S - t + x + 1))).sum()
        val -= _clog(fac.qf(-np.arange(1, t + N - x))).sum()
        val -= _clog(fac.qf(-np.arange(1, S + N - x))).sum()
        val -= _clog(fac.kf(x - T + 1 + np.arange(T + N - t))).sum()
        val -= _clog(fac.kf(x - t - S + 1 + np.arange(N + t))).sum()
        if (t + S) % 2:
            val += 1j * np.pi
        out.append(val)
    return np.array(out, dtype=complex)


def slice_weight_w(t: int, x: int, dims: HexagonDims, params: WeightParams, S: int | None = None) -> LogSignedValue:
    """One-site slice weight as a positive log-domain value.

    The overall phase is fixed by the section: weights on one section share
    it, and it is divided out here.
    """
    S = dims.S if S is None else S
    lo, hi = section_bounds(dims.N, dims.T, S, t)
    if not lo <= x <= hi:
        raise ValueError(f"x={x} outside the section [{lo}, {hi}]")
    logs = log_slice_weights(t, S, dims.N, dims.T, np.arange(lo, hi + 1), params)
    ref = logs[0].imag
    val = logs[x - lo]
    phase = np.exp(1j * (val.imag - ref))
    if abs(phase.imag) > 1e-8 or phase.real < 0:
        raise InadmissibleParameters(f"slice weight at (t={t}, x={x}) is not positive")
    return LogSignedValue(float(val.real), 1)


def _log_vandermonde(vals) -> complex:
    vals = np.asarray(vals)
    n = len(vals)
    if n < 2:
        return 0j
    i, j = np.triu_indices(n, 1)
    return _clog(vals[i] - vals[j]).sum()


@dataclass
class SliceMeasure:
    t: int
    S: int
    probs: dict = field(default_factory=dict)

    def vector(self, states) -> np.ndarray:
        return np.array([self.probs.get(s, 0.0) for s in states])


def slice_measure(t: int, dims: HexagonDims, params: WeightParams, S: int | None = None) -> SliceMeasure:
    """``rho_{S,t}`` as an explicit map from configurations to probabilities."""
    S = dims.S if S is None else S
    fac = _factors(params)
    N, T = dims.N, dims.T
    lo, hi = section_bounds(N, T, S, t)
    lw = log_slice_weights(t, S, N, T, np.arange(lo, hi + 1), fac)
    states = slice_states(N, T, S, t)
    logs = []
    for X in states:
        idx = np.array(X) - lo
        logs.append(2 * _log_vandermonde(fac.mu(np.array(X), t, S)) + lw[idx].sum())
    probs = normalize_log_weights(np.array(logs))
    if probs.min() < -1e-12:
        raise InadmissibleParameters("slice law has negative entries")
    return SliceMeasure(t, S, dict(zip(states, np.clip(probs, 0, None))))


def _target(kind: str, S: int, t: int) -> tuple[int, int]:
    return {"t+": (S, t + 1), "t-": (S, t - 1), "S+": (S + 1, t), "S-": (S - 1, t)}[kind]


def _offsets(kind: str) -> tuple[int, int]:
    return (0, 1) if kind in ("t+", "S+") else (0, -1)


def step_factors(kind: str, x, S: int, t: int, N: int, T: int, params):
    """Per-particle factors ``(w_0(x), w_1(x))`` for one matrix family.

    ``w_1`` belongs to the move ``x -> x + 1`` for ``t+``/``S+`` and to
    ``x -> x - 1`` for ``t-``/``S-``.
    """
    fac = _factors(params)
    x = np.asarray(x)
    den = fac.kf(2 * x - t - S + 1)
    if kind == "t+":
        w0 = -fac.qf(x + T - t - S) * fac.kf(x + N - t) / den
        w1 = fac.qp(T + N - 1 - t) * fac.qf(x - S - N + 1) * fac.kf(x - T + 1) / den
    elif kind == "S+":
        w0 = -fac.qf(x + T - t - S) * fac.kf(x + N - S) / den
        w1 = fac.qp(T + N - 1 - S) * fac.qf(x - t - N + 1) * fac.kf(x - T + 1) / den
    elif kind == "t-":
        w0 = -fac.qf(x - t - N + 1) * fac.kf(x - S - t + 1) / den
        w1 = fac.qp(-(t + N - 1)) * fac.qf(x) * fac.kf(x + N - S) / den
    elif kind == "S-":
        w0 = -fac.qf(x - S - N + 1) * fac.kf(x - S - t + 1) / den
        w1 = fac.qp(-(S + N - 1)) * fac.qf(x) * fac.kf(x + N - t) / den
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return w0, w1


@dataclass
class TransitionRow:
    source: PathConfig
    kind: str
    S: int
    targets: list

    def as_dict(self) -> dict:
        return dict(self.targets)


def _candidates(xs: tuple, step: int, lo: int, hi: int):
    """Offset vectors in {0, step}^N keeping the tuple increasing inside [lo, hi]."""
    N = len(xs)
    out = []

    def rec(i, acc, ds):
        if i == N:
            out.append((tuple(acc), tuple(ds)))
            return
        for d in (0, step):
            y = xs[i] + d
            if y < lo or y > hi or (acc and y <= acc[-1]):
                continue
            acc.append(y)
            ds.append(d != 0)
            rec(i + 1, acc, ds)
            acc.pop()
            ds.pop()

    rec(0, [], [])
    return out


def transition_row(kind: str, X, dims: HexagonDims, params, S: int | None = None, t: int | None = None) -> TransitionRow:
    """Normalized row of ``P^{S,t}_{kind}`` starting from ``X``."""
    S = dims.S if S is None else S
    if isinstance(X, PathConfig):
        t, xs = X.t, tuple(X.xs)
    else:
        xs = tuple(X)
        if t is None:
            raise ValueError("t is required when X is a plain tuple")
    N, T = dims.N, dims.T
    S2, t2 = _target(kind, S, t)
    if not (0 <= S2 <= T and 0 <= t2 <= T):
        raise ValueError(f"target slice (S={S2}, t={t2}) is outside the hexagon family")
    fac = _factors(params)
    lo, hi = section_bounds(N, T, S2, t2)
    cands = _candidates(xs, _offsets(kind)[1], lo, hi)
    if not cands:
        raise RuntimeError(f"no admissible targets from {xs} for {kind}")
    xarr = np.array(xs)
    w0, w1 = step_factors(kind, xarr, S, t, N, T, fac)
    l0, l1 = _clog(w0), _clog(w1)
    base = -_log_vandermonde(fac.mu(xarr, t, S))
    logs = []
    for ys, moved in cands:
        m = np.array(moved, dtype=bool)
        logs.append(base + _log_vandermonde(fac.mu(np.array(ys), t2, S2)) + l1[m].sum() + l0[~m].sum())
    probs = normalize_log_weights(np.array(logs))
    if probs.min() < -1e-10:
        raise InadmissibleParameters(f"negative transition probability in {kind} row from {xs}")
    probs = np.clip(probs, 0, None)
    return TransitionRow(PathConfig(t, xs), kind, S, [(ys, p) for (ys, _), p in zip(cands, probs)])


def transition_matrix(kind: str, t: int, S: int, dims: HexagonDims, params):
    """Dense ``P^{S,t}_{kind}`` with its row and column state lists."""
    N, T = dims.N, dims.T
    S2, t2 = _target(kind, S, t)
    rows = slice_states(N, T, S, t)
    cols = slice_states(N, T, S2, t2)
    col_index = {c: k for k, c in enumerate(cols)}
    M = np.zeros((len(rows), len(cols)))
    fac = _factors(params)
    for r, X in enumerate(rows):
        for ys, p in transition_row(kind, X, dims, fac, S=S, t=t).targets:
            M[r, col_index[ys]] = p
    return rows, cols, M


@dataclass
class UMatrix:
    kind: str
    S: int
    t: int
    row_lo: int
    col_lo: int
    values: np.ndarray

    def entry(self, x: int, y: int):
        i, j = x - self.row_lo, y - self.col_lo
        if 0 <= i < self.values.shape[0] and 0 <= j < self.values.shape[1]:
            return self.values[i, j]
        return 0.0


def u_matrix(kind: str, dims: HexagonDims, params, t: int, S: int) -> UMatrix:
    """Two-diagonal matrix whose minors give the transition rows."""
    N, T = dims.N, dims.T
    fac = _factors(params)
    S2, t2 = _target(kind, S, t)
    rlo, rhi = section_bounds(N, T, S, t)
    clo, chi = section_bounds(N, T, S2, t2)
    xs = np.arange(rlo, rhi + 1)
    w0, w1 = step_factors(kind, xs, S, t, N, T, fac)
    step = _offsets(kind)[1]
    sign = -1 if step == 1 else 1
    U = np.zeros((len(xs), chi - clo + 1), dtype=fac.dtype)
    for k, x in enumerate(xs):
        for y, val in ((x, sign * w0[k]), (x + step, sign * w1[k])):
            if clo <= y <= chi:
                U[k, y - clo] = val
    return UMatrix(kind, S, t, rlo, clo, U)


def det_row_from_u(kind: str, X, dims: HexagonDims, params, S: int, t: int) -> dict:
    """Row of ``P^{S,t}_{kind}`` rebuilt as Vandermonde ratio times ``det U``."""
    fac = _factors(params)
    U = u_matrix(kind, dims, fac, t, S)
    S2, t2 = _target(kind, S, t)
    xs = np.array(X)
    states = slice_states(dims.N, dims.T, S2, t2)
    base = -_log_vandermonde(fac.mu(xs, t, S))
    vals = {}
    for Y in states:
        minor = np.array([[U.entry(int(x), int(y)) for y in Y] for x in X])
        d = np.linalg.det(minor) if len(X) else 1.0
        if abs(d) == 0:
            continue
        vals[Y] = base + _log_vandermonde(fac.mu(np.array(Y), t2, S2)) + _clog(d)
    keys = list(vals)
    probs = normalize_log_weights(np.array([vals[k] for k in keys]))
    return dict(zip(keys, probs))


def u_tridiagonal_closed_form(dims: HexagonDims, params, t: int, S: int) -> UMatrix:
    """Closed-form product ``U_{t+} U_{S-}`` from the commutation argument."""
    N, T = dims.N, dims.T
    fac = _factors(params)
    qf, kf, qp = fac.qf, fac.kf, fac.qp
    rlo, rhi = section_bounds(N, T, S, t)
    clo, chi = section_bounds(N, T, S - 1, t + 1)
    U = np.zeros((rhi - rlo + 1, chi - clo + 1), dtype=fac.dtype)
    for k, x in enumerate(range(rlo, rhi + 1)):
        u1 = (qp(T + N - 1 - t) * qf(x - S - N + 1) * qf(x - S - N + 2) * kf(x - S - t + 1) * kf(x - T + 1)
              / (kf(2 * x - t - S + 2) * kf(2 * x - t - S + 1)))
        u0 = (-qf(x - S - N + 1) * kf(x + N - t) / kf(2 * x - t - S + 1)
              * (qp(T - S - t) * qf(x + 1) * kf(x - T + 1) / kf(2 * x - t - S + 2)
                 + qf(x + T - t - S) * kf(x - S - t) / kf(2 * x - t - S)))
        um1 = (qp(-(S + N - 1)) * qf(x + T - t - S) * qf(x) * kf(x + N - t) * kf(x + N - t - 1)
               / (kf(2 * x - t - S + 1) * kf(2 * x - t - S)))
        for y, val in ((x + 1, u1), (x, u0), (x - 1, um1)):
            if clo <= y <= chi:
                U[k, y - clo] = val
    return UMatrix("t+S-", S, t, rlo, clo, U)


def relative_residual(A, B, floor: float = 1e-14) -> float:
    """Entrywise ``|A - B| / max(|A|, |B|)``, guarded near zero by ``floor * max|A|``."""
    A, B = np.asarray(A), np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    if A.size == 0:
        return 0.0
    scale = max(np.abs(A).max(), np.abs(B).max(), 1e-300)
    denom = np.maximum(np.maximum(np.abs(A), np.abs(B)), floor * scale)
    return float((np.abs(A - B) / denom).max())


# (first matrix, its slice shift), (second matrix) on each side of an identity
COMMUTATIONS = {
    "t+S-": (("t+", "S-"), ("S-", "t+")),
    "t-S-": (("t-", "S-"), ("S-", "t-")),
    "t+S+": (("t+", "S+"), ("S+", "t+")),
    "t-S+": (("t-", "S+"), ("S+", "t-")),
}


def _applicable(pair, S, t, T) -> bool:
    S1, t1 = _target(pair[0], S, t)
    S2, t2 = _target(pair[1], S1, t1)
    return 0 <= S1 <= T and 0 <= t1 <= T and 0 <= S2 <= T and 0 <= t2 <= T


def _chain_product(first, second, S, t, dims, fac, level):
    S1, t1 = _target(first, S, t)
    if level == "U":
        return u_matrix(first, dims, fac, t, S).values @ u_matrix(second, dims, fac, t1, S1).values
    return transition_matrix(first, t, S, dims, fac)[2] @ transition_matrix(second, t1, S1, dims, fac)[2]


def commutation_check(dims: HexagonDims, params, t: int, S: int, level: str = "both") -> float:
    """Largest relative residual over every commutation identity defined at (S, t).

    ``level`` selects the two-diagonal matrices (``"U"``), the stochastic
    matrices (``"P"``) or both.  The closed form of ``U_{t+} U_{S-}`` is
    compared as well whenever that product is defined.
    """
    fac = _factors(params)
    levels = ("U", "P") if level == "both" else (level,)
    worst = 0.0
    for name, (lhs, rhs) in COMMUTATIONS.items():
        if not (_applicable(lhs, S, t, dims.T) and _applicable(rhs, S, t, dims.T)):
            continue
        for lev in levels:
            A = _chain_product(lhs[0], lhs[1], S, t, dims, fac, lev)
            B = _chain_product(rhs[0], rhs[1], S, t, dims, fac, lev)
            worst = max(worst, relative_residual(A, B))
        if name == "t+S-" and "U" in levels:
            A = _chain_product("t+", "S-", S, t, dims, fac, "U")
            worst = max(worst, relative_residual(A, u_tridiagonal_closed_form(dims, fac, t, S).values))
    return worst


def check_admissible(dims: HexagonDims, params) -> None:
    """Positivity sweep over every (S, t) the chains may visit."""
    for S in range(dims.T + 1):
        positivity_case(params, dims.with_S(S))
