"""Correlation kernel of the path ensemble and its inverse-Kasteleyn form.

The one-time law of the paths is an orthogonal polynomial ensemble, so the
orthonormal functions ``f_n^t(x) = sqrt(w_t(x)) R_n(x) / |R_n|`` on each
section, together with the transfer numbers ``c_n^t`` linking neighbouring
sections, give every correlation function as a determinant.

Two routes produce the basis:

* a Lanczos (Stieltjes) sweep on the real lattice function with the
  normalized slice weights; this is what the kernel uses, for every family;
* explicit q-Racah polynomials (terminating 4phi3 sums) with the parameter
  correspondence of :func:`qracah_params`, used only as an independent check
  for the q-families.

``c_n^t`` is obtained by projecting the one-step transfer matrix onto
``f^t (x) f^{t+1}`` and its closed form is checked separately.
"""
from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .chains import log_slice_weights, step_factors
from .numerics import normalize_log_weights
from .weights import (
    DegenerateParameters,
    Elliptic,
    HexagonDims,
    InadmissibleParameters,
    QFactors,
    as_factors,
    positivity_case,
    section_bounds,
)

# ---------------------------------------------------------------------------
# q-Racah polynomials


@dataclass(frozen=True)
class QRacahParams:
    alpha: complex
    beta: complex
    gamma: complex
    delta: complex
    M: int
    x_shift: int = 0

    def mu(self, x, q):
        x = np.asarray(x, dtype=float)
        return np.power(q, -x) + self.gamma * self.delta * np.power(q, x + 1)


def _near_zero(value, scale: float = 1.0) -> bool:
    return abs(value) <= 1e-13 * max(scale, 1.0)


def basic_hypergeometric_43(upper: Sequence, lower: Sequence, q, terms: int):
    """Terminating ``4phi3(upper; lower | q; q)`` summed over ``k <= terms``.

    Terms are built by their ratio recurrence. A lower parameter hitting
    ``q^-j`` before the sum ends is a degenerate input.
    """
    total = 1.0 + 0j
    term = 1.0 + 0j
    for k in range(terms):
        num = np.prod([1 - a * q**k for a in upper])
        if _near_zero(num) or term == 0:
            break
        den = np.prod([1 - b * q**k for b in lower]) * (1 - q ** (k + 1))
        if _near_zero(den):
            raise DegenerateParameters(f"vanishing lower Pochhammer at k={k + 1}")
        term = term * num / den * q
        total += term
    return total


def qracah_poly(n: int, x: int, params: QRacahParams, q):
    """``R_n(mu(x); alpha, beta, gamma, delta | q)`` at the polynomial variable x."""
    if not (0 <= n <= params.M and 0 <= x <= params.M):
        raise ValueError(f"need 0 <= n, x <= M={params.M}, got n={n}, x={x}")
    a, b, g, d = params.alpha, params.beta, params.gamma, params.delta
    upper = (q**-n, a * b * q ** (n + 1), q**-x, g * d * q ** (x + 1))
    lower = (a * q, b * d * q, g * q)
    val = basic_hypergeometric_43(upper, lower, q, min(n, x))
    return val.real if not np.iscomplexobj(q) and abs(val.imag) == 0 else val


def qracah_weight(x: int, params: QRacahParams, q):
    """Orthogonality weight of the q-Racah polynomials (up to a constant)."""
    a, b, g, d = params.alpha, params.beta, params.gamma, params.delta
    num = 1.0 + 0j
    den = 1.0 + 0j
    for k in range(x):
        num *= (1 - a * q ** (k + 1)) * (1 - b * d * q ** (k + 1)) * (1 - g * q ** (k + 1)) * (1 - g * d * q ** (k + 1))
        den *= (1 - q ** (k + 1)) * (1 - g * d * q ** (k + 1) / a) * (1 - g * q ** (k + 1) / b) * (1 - d * q ** (k + 1))
    return num / den * (1 - g * d * q ** (2 * x + 1)) / ((a * b * q) ** x * (1 - g * d * q))


def qracah_case(t: int, S: int, T: int) -> int:
    """Which of the four parameter correspondences applies on section t."""
    if t < S and t < T - S:
        return 1
    if S <= t <= T - S:
        return 2
    if T - S <= t < S:
        return 3
    return 4


def _is_q_family(fac: QFactors) -> bool:
    return not fac.classical


def qracah_params(t: int, dims: HexagonDims, params, S: int | None = None) -> QRacahParams:
    """q-Racah parameters whose weight matches the slice weight on section t."""
    fac = as_factors(params)
    if not _is_q_family(fac):
        raise TypeError("q-Racah parameters exist only for the q-families")
    S = dims.S if S is None else S
    N, T = dims.N, dims.T
    q, k2 = fac.q, fac.k2
    case = qracah_case(t, S, T)
    if case == 1:
        a, b, g, d, M, shift = q ** (-S - N), q ** (S - T - N), q ** (-t - N), k2 * q ** (N - S), t + N - 1, 0
    elif case == 2:
        a, b, g, d, M, shift = q ** (-t - N), q ** (t - T - N), q ** (-S - N), k2 * q ** (N - t), S + N - 1, 0
    elif case == 3:
        a, b, g, d = q ** (t - T - N), q ** (-t - N), q ** (S - T - N), k2 * q ** (t + N - T)
        M, shift = T - S + N - 1, T - t - S
    else:
        a, b, g, d = q ** (S - T - N), q ** (-S - N), q ** (t - T - N), k2 * q ** (N + S - T)
        M, shift = T - t + N - 1, T - t - S
    return QRacahParams(a, b, g, d, M, shift)


# ---------------------------------------------------------------------------
# Orthonormal basis


@dataclass
class OrthoBasis:
    """Orthonormal functions on one section; row n of ``f`` is ``f_n^t``."""

    t: int
    S: int
    lo: int
    f: np.ndarray
    log_w: np.ndarray
    weights: np.ndarray
    lattice: np.ndarray
    norms: np.ndarray | None = None
    c: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.weights)

    @property
    def points(self) -> range:
        return range(self.lo, self.lo + self.dim)

    def log_sqrt_weight(self, x: int) -> complex:
        """Log of ``sqrt(w_t(x))`` for the printed weight, one branch per section."""
        ref = self.log_w[0].imag
        return 0.5 * (self.log_w[x - self.lo].real + 1j * ref)

    def value(self, n: int, x: int) -> float:
        if n >= self.dim or not self.lo <= x < self.lo + self.dim:
            return 0.0
        return float(self.f[n, x - self.lo])

    def gram_residual(self) -> float:
        return float(np.abs(self.f @ self.f.T - np.eye(self.dim)).max())


def real_lattice(values) -> np.ndarray:
    """Rotate lattice values sharing one complex phase onto the real line."""
    values = np.asarray(values)
    if not np.iscomplexobj(values):
        return values.astype(float)
    phase = cmath.exp(-0.5j * cmath.phase(np.sum(values**2)))
    rotated = values * phase
    if np.abs(rotated.imag).max() > 1e-9 * np.abs(rotated).max():
        raise InadmissibleParameters("lattice function values do not share a phase")
    return rotated.real


def lanczos_basis(lattice: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Orthonormal ``sqrt(w) p_n(lattice)`` with positive leading coefficients.

    Three-term (Stieltjes) recurrence with two passes of full
    reorthogonalization, which keeps the Gram residual at rounding level.
    """
    dim = len(weights)
    if np.any(weights <= 0):
        raise InadmissibleParameters("slice weights must be positive")
    if len(np.unique(lattice)) < dim:
        raise DegenerateParameters("lattice function is not injective on the section")
    mid = 0.5 * (lattice.max() + lattice.min())
    half = 0.5 * (lattice.max() - lattice.min()) or 1.0
    scaled = (lattice - mid) / half
    basis = np.zeros((dim, dim))
    vec = np.sqrt(weights)
    basis[0] = vec / np.linalg.norm(vec)
    for n in range(1, dim):
        r = scaled * basis[n - 1]
        for _ in range(2):
            r -= basis[:n].T @ (basis[:n] @ r)
        norm = np.linalg.norm(r)
        if norm < 1e-13:
            raise DegenerateParameters(f"Lanczos breakdown at degree {n}")
        basis[n] = r / norm
    return basis


def build_basis(t: int, dims: HexagonDims, params, S: int | None = None) -> OrthoBasis:
    """Orthonormal basis on section t, with ``c_n^t`` attached when t < T."""
    ctx = KernelContext(dims, params, S=S)
    return ctx.basis_with_coupling(t)


def _basis_only(t: int, S: int, dims: HexagonDims, fac: QFactors) -> OrthoBasis:
    N, T = dims.N, dims.T
    lo, hi = section_bounds(N, T, S, t)
    xs = np.arange(lo, hi + 1)
    log_w = log_slice_weights(t, S, N, T, xs, fac)
    try:
        weights = normalize_log_weights(log_w)
    except ValueError as err:
        raise InadmissibleParameters(f"slice weights on section {t}: {err}") from err
    lattice = real_lattice(fac.mu(xs, t, S))
    f = lanczos_basis(lattice, weights)
    return OrthoBasis(t, S, lo, f, log_w, weights, lattice)


def qracah_norms(basis: OrthoBasis, dims: HexagonDims, fac: QFactors) -> np.ndarray:
    """``(R_n, R_n) = sum_x w_t(x) R_n(x)^2`` with the printed slice weight."""
    if basis.norms is None:
        qr = qracah_params(basis.t, dims, fac, S=basis.S)
        w_printed = np.exp(basis.log_w)
        basis.norms = np.array(
            [
                np.sum(w_printed * np.array([qracah_poly(n, x + qr.x_shift, qr, fac.q) for x in basis.points]) ** 2)
                for n in range(basis.dim)
            ]
        )
    return basis.norms


# ---------------------------------------------------------------------------
# Transfer numbers c_n^t


def transfer_matrix(lower: OrthoBasis, upper: OrthoBasis, dims: HexagonDims, fac: QFactors) -> np.ndarray:
    """``v(x, y) = sqrt(w_t(x) / w_{t+1}(y)) (w_1(x) [y=x+1] + w_0(x) [y=x])``.

    The square roots use the printed (unnormalized, possibly complex)
    slice weights; this fixes the gauge in which the closed forms hold.
    """
    t, S = lower.t, lower.S
    v = np.zeros((lower.dim, upper.dim), dtype=complex)
    xs = np.array(lower.points)
    w0, w1 = step_factors("t+", xs, S, t, dims.N, dims.T, fac)
    for i, x in enumerate(xs):
        for y, w in ((x, w0[i]), (x + 1, w1[i])):
            j = y - upper.lo
            if 0 <= j < upper.dim:
                v[i, j] = np.exp(lower.log_sqrt_weight(x) - upper.log_sqrt_weight(y)) * w
    return v


@dataclass
class Coupling:
    """Transfer numbers between sections t and t+1.

    ``printed`` are the complex numbers in the printed-weight gauge,
    ``c`` the same numbers with their common phase removed (signed reals),
    so that ``printed = phase * c``.
    """

    t: int
    printed: np.ndarray
    c: np.ndarray
    phase: complex
    residual: float


def coupling(lower: OrthoBasis, upper: OrthoBasis, dims: HexagonDims, fac: QFactors) -> Coupling:
    v = transfer_matrix(lower, upper, dims, fac)
    n = min(lower.dim, upper.dim)
    printed = np.einsum("nx,xy,ny->n", lower.f[:n], v, upper.f[:n])
    big = np.argmax(np.abs(printed))
    phase = printed[big] / abs(printed[big])
    c = printed / phase
    if np.abs(c.imag).max() > 1e-9 * np.abs(c).max():
        raise InadmissibleParameters("transfer numbers do not share a common phase")
    c = c.real
    # v^T f_n^t = c_n f_n^{t+1} for every n (zero past the upper dimension).
    scale = max(np.abs(v).max(), 1e-300)
    lhs = lower.f @ v
    rhs = np.zeros_like(lhs)
    rhs[:n] = printed[:n, None] * upper.f[:n]
    residual = float(np.abs(lhs - rhs).max() / scale)
    return Coupling(lower.t, printed, c, complex(phase), residual)


def closed_form_transfer(n: int, t: int, dims: HexagonDims, params):
    """``(c_n^t)^2 = (q^(n-N-t) - 1)(1 - q^(T+N-t-n-1))`` in the printed gauge.

    Note the order in the first factor: with ``1 - q^(n-N-t)`` instead the
    square comes out with the wrong sign for every family (c would be
    imaginary while the transfer matrix is real for q < 1).
    """
    fac = as_factors(params)
    N, T = dims.N, dims.T
    return complex(-fac.qf(n - N - t) * fac.qf(T + N - t - n - 1))


# ---------------------------------------------------------------------------
# Kernel


@dataclass
class KernelEval:
    points: list
    K: np.ndarray

    def correlation(self) -> float:
        return float(np.linalg.det(self.K)) if len(self.points) else 1.0


class KernelContext:
    """Caches bases and transfer numbers for one hexagon and weight family."""

    def __init__(self, dims: HexagonDims, params, S: int | None = None):
        if isinstance(params, Elliptic):
            raise NotImplementedError("no orthogonal-polynomial kernel for the elliptic family")
        self.dims = dims
        self.S = dims.S if S is None else S
        self.fac = as_factors(params)
        if not isinstance(params, QFactors):
            positivity_case(params, dims.with_S(self.S))
        self._bases: dict[int, OrthoBasis] = {}
        self._couplings: dict[int, Coupling] = {}
        self._phase_sums: list | None = None

    def basis(self, t: int) -> OrthoBasis:
        if not 0 <= t <= self.dims.T:
            raise ValueError(f"t={t} outside [0, {self.dims.T}]")
        if t not in self._bases:
            self._bases[t] = _basis_only(t, self.S, self.dims, self.fac)
        return self._bases[t]

    def coupling(self, t: int) -> Coupling:
        if t not in self._couplings:
            self._couplings[t] = coupling(self.basis(t), self.basis(t + 1), self.dims, self.fac)
        return self._couplings[t]

    def basis_with_coupling(self, t: int) -> OrthoBasis:
        b = self.basis(t)
        if t < self.dims.T and b.c is None:
            b.c = self.coupling(t).c
        return b

    def _c_column(self, t: int, size: int) -> np.ndarray:
        c = self.coupling(t).c
        out = np.zeros(size)
        out[: len(c)] = c
        return out

    def _f_column(self, t: int, x: int, size: int) -> np.ndarray:
        b = self.basis(t)
        out = np.zeros(size)
        if b.lo <= x < b.lo + b.dim:
            out[: b.dim] = b.f[:, x - b.lo]
        return out

    def entry(self, k: int, x: int, l: int, y: int) -> float:
        """``K(k, x; l, y)`` in the real gauge."""
        N = self.dims.N
        size = max(self.basis(s).dim for s in range(min(k, l), max(k, l) + 1))
        fk = self._f_column(k, x, size)
        fl = self._f_column(l, y, size)
        if k >= l:
            prod = np.ones(N)
            for s in range(l, k):
                prod *= self._c_column(s, size)[:N]
            return float(np.sum(fk[:N] * fl[:N] / prod))
        prod = np.ones(size)
        for s in range(k, l):
            prod *= self._c_column(s, size)
        return float(-np.sum(prod[N:] * fk[N:] * fl[N:]))

    def phase_sum(self, t: int) -> complex:
        """Accumulated phase ``prod_{s<t} phase_s`` of the printed gauge."""
        if self._phase_sums is None:
            acc = [1.0 + 0j]
            for s in range(self.dims.T):
                acc.append(acc[-1] * self.coupling(s).phase)
            self._phase_sums = acc
        return self._phase_sums[t]

    def printed_entry(self, k: int, x: int, l: int, y: int) -> complex:
        """``K`` in the gauge fixed by the printed weights and closed ``c_n^t``."""
        return self.phase_sum(l) / self.phase_sum(k) * self.entry(k, x, l, y)

    def matrix(self, points: Sequence) -> np.ndarray:
        pts = list(points)
        return np.array([[self.entry(k, x, l, y) for (l, y) in pts] for (k, x) in pts])


def correlation_kernel(points: Iterable, dims: HexagonDims, params, ctx: KernelContext | None = None) -> KernelEval:
    pts = [(int(t), int(x)) for t, x in points]
    for t, x in pts:
        lo, hi = dims.section(t)
        if not lo <= x <= hi:
            raise ValueError(f"point ({t}, {x}) outside the hexagon")
    ctx = ctx or KernelContext(dims, params)
    return KernelEval(pts, ctx.matrix(pts))


def correlation_function(points: Iterable, dims: HexagonDims, params, ctx: KernelContext | None = None) -> float:
    """Probability that every listed point carries a path, as ``det K``."""
    return correlation_kernel(points, dims, params, ctx).correlation()


def density_rows(dims: HexagonDims, params, ctx: KernelContext | None = None):
    """``(t, x, rho1)`` over the whole hexagon."""
    ctx = ctx or KernelContext(dims, params)
    for t in range(dims.T + 1):
        for x in dims.section_points(t):
            yield t, x, ctx.entry(t, x, t, x)


def write_density_csv(path, dims: HexagonDims, params) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "rho1"])
        for t, x, rho in density_rows(dims, params):
            writer.writerow([t, x, f"{rho:.15g}"])


# ---------------------------------------------------------------------------
# Basis diagnostics


@dataclass
class BasisReport:
    gram: float
    transfer: float
    qracah_route: float | None = None
    closed_form_c: float | None = None
    norm_ratio: float | None = None
    difference_operator: float | None = None
    weight_ratio: float | None = None


def _qracah_functions(basis: OrthoBasis, qr: QRacahParams, q) -> np.ndarray:
    xs = np.array(basis.points)
    rows = []
    for n in range(basis.dim):
        vals = np.sqrt(basis.weights) * np.array([qracah_poly(n, x + qr.x_shift, qr, q) for x in xs])
        rows.append(vals / np.linalg.norm(vals))
    return np.array(rows)


def qracah_route_residual(ctx: KernelContext, t: int) -> float:
    """Max ``1 - |<f_n, f_n^{qRacah}>|``: the two constructions agree up to sign."""
    b = ctx.basis(t)
    qr = qracah_params(t, ctx.dims, ctx.fac, S=ctx.S)
    g = _qracah_functions(b, qr, ctx.fac.q)
    overlaps = np.abs(np.einsum("nx,nx->n", b.f, g))
    return float(np.abs(1 - overlaps).max())


def qracah_weight_residual(ctx: KernelContext, t: int) -> float:
    """Spread of ``w_t(x) / w_qRacah(x + shift)`` over the section."""
    b = ctx.basis(t)
    qr = qracah_params(t, ctx.dims, ctx.fac, S=ctx.S)
    ratio = np.array([b.weights[i] / qracah_weight(x + qr.x_shift, qr, ctx.fac.q) for i, x in enumerate(b.points)])
    return float(np.abs(ratio / ratio[0] - 1).max())


def closed_form_c_residual(ctx: KernelContext, t: int) -> float:
    """Compare ``c_n^t`` squared in the printed gauge with the closed formula."""
    cp = ctx.coupling(t).printed
    out = 0.0
    for n, val in enumerate(cp):
        ref = closed_form_transfer(n, t, ctx.dims, ctx.fac)
        out = max(out, abs(val**2 - ref) / max(abs(ref), 1e-300))
    return out


def norm_ratio_residual(ctx: KernelContext, t: int) -> float | None:
    """Ratio of consecutive q-Racah norms against its closed form (first case only)."""
    dims, S = ctx.dims, ctx.S
    T, N = dims.T, dims.N
    if qracah_case(t, S, T) != 1 or qracah_case(t + 1, S, T) != 1:
        return None
    q = ctx.fac.q
    lo = qracah_norms(ctx.basis(t), dims, ctx.fac)
    hi = qracah_norms(ctx.basis(t + 1), dims, ctx.fac)
    out = 0.0
    for n in range(min(len(lo), len(hi))):
        ref = -(1 - q ** (T + N - t - n - 1)) * (1 - q ** (-t - N + n)) / (1 - q ** (-t - N)) ** 2
        out = max(out, abs(hi[n] / lo[n] - ref) / abs(ref))
    return out


def difference_operator_residual(ctx: KernelContext, t: int) -> float:
    """Eigenvalue identity ``q^-n (1-q^n)(1-ab q^(n+1)) f_n`` for the basis."""
    b = ctx.basis(t)
    qr = qracah_params(t, ctx.dims, ctx.fac, S=ctx.S)
    q = ctx.fac.q
    a, be, g, d = qr.alpha, qr.beta, qr.gamma, qr.delta
    out = 0.0
    for n in range(b.dim):
        f = np.concatenate([[0.0], b.f[n], [0.0]])
        w = np.concatenate([[1.0], b.weights, [1.0]])
        lam = q**-n * (1 - q**n) * (1 - a * be * q ** (n + 1))
        for i in range(b.dim):
            x = i + b.lo + qr.x_shift
            B = (1 - a * q ** (x + 1)) * (1 - be * d * q ** (x + 1)) * (1 - g * q ** (x + 1)) * (1 - g * d * q ** (x + 1))
            B /= (1 - g * d * q ** (2 * x + 1)) * (1 - g * d * q ** (2 * x + 2))
            if x == 0:
                D = 0.0
            else:
                D = q * (1 - q**x) * (a - g * d * q**x) * (be - g * q**x) * (1 - d * q**x)
                D /= (1 - g * d * q ** (2 * x)) * (1 - g * d * q ** (2 * x + 1))
            j = i + 1
            up = B * f[j + 1] * math.sqrt(w[j] / w[j + 1]) if i + 1 < b.dim else 0.0
            down = D * f[j - 1] * math.sqrt(w[j] / w[j - 1]) if i > 0 else 0.0
            lhs = lam * f[j]
            rhs = up - (B + D) * f[j] + down
            scale = max(abs(B), abs(D), abs(lam), 1.0)
            out = max(out, abs(lhs - rhs) / scale)
    return out


def basis_report(ctx: KernelContext, t: int) -> BasisReport:
    b = ctx.basis(t)
    rep = BasisReport(b.gram_residual(), ctx.coupling(t).residual if t < ctx.dims.T else 0.0)
    if t < ctx.dims.T:
        rep.closed_form_c = closed_form_c_residual(ctx, t)
    if _is_q_family(ctx.fac):
        rep.qracah_route = qracah_route_residual(ctx, t)
        rep.weight_ratio = qracah_weight_residual(ctx, t)
        rep.difference_operator = difference_operator_residual(ctx, t)
        if t < ctx.dims.T:
            rep.norm_ratio = norm_ratio_residual(ctx, t)
    return rep


# ---------------------------------------------------------------------------
# Hypergeometric relations


def _rel(lhs, rhs, *terms) -> float:
    scale = max([abs(lhs), abs(rhs)] + [abs(v) for v in terms] + [1e-300])
    return abs(lhs - rhs) / scale


def phi_relation_contiguous(a, b, c, d, u, v, w, q, n: int) -> float:
    """Three-term contiguous relation with one upper parameter ``q^-n``."""
    phi = lambda up, lowr: basic_hypergeometric_43(up, lowr, q, n)
    t1 = (c - w) * (1 - d) * phi((a, b, c, q * d), (u, v, q * w))
    t2 = (w - d) * (1 - c) * phi((a, b, q * c, d), (u, v, q * w))
    rhs = (c - d) * (1 - w) * phi((a, b, c, d), (u, v, w))
    return _rel(t1 + t2, rhs, t1, t2)


def phi_relation_balanced(a, b, c, d, u, v, w, q, n: int) -> float:
    """Contiguous relation for balanced terminating series (``u v w = q a b c d``)."""
    phi = lambda up, lowr: basic_hypergeometric_43(up, lowr, q, n)
    t1 = (c - u) * (1 - v / c) * (w / q - 1) * phi((a, b, c / q, d), (u, v, w / q))
    t2 = (u - d) * (1 - v / d) * (w / q - 1) * phi((a, b, c, d / q), (u, v, w / q))
    rhs = (c - d) * (w / q - b) * (1 - a * q / w) * phi((a, b, c, d), (u, v, w))
    return _rel(t1 + t2, rhs, t1, t2)


def _R(n, x, a, b, g, d, q):
    upper = (q**-n, a * b * q ** (n + 1), q**-x, g * d * q ** (x + 1))
    return basic_hypergeometric_43(upper, (a * q, b * d * q, g * q), q, min(n, x))


def qracah_relation_residuals(p: QRacahParams, q, n: int, x: int) -> list[float]:
    """The four polynomial forms of the contiguous relations at (n, x)."""
    a, b, g, d = p.alpha, p.beta, p.gamma, p.delta
    out = []
    gd = g * d
    if x >= 1:
        t1 = (q**-x - q * g) * (1 - gd * q ** (x + 1)) * _R(n, x, a, b, q * g, d, q)
        t2 = (q * g - gd * q ** (x + 1)) * (1 - q**-x) * _R(n, x - 1, a, b, q * g, d, q)
        rhs = (q**-x - gd * q ** (x + 1)) * (1 - q * g) * _R(n, x, a, b, g, d, q)
        out.append(_rel(t1 + t2, rhs, t1, t2))
        t1 = (q**-x - q * a) * (1 - gd * q ** (x + 1)) * _R(n, x, q * a, b / q, g, q * d, q)
        t2 = (q * a - gd * q ** (x + 1)) * (1 - q**-x) * _R(n, x - 1, q * a, b / q, g, q * d, q)
        rhs = (q**-x - gd * q ** (x + 1)) * (1 - q * a) * _R(n, x, a, b, g, d, q)
        out.append(_rel(t1 + t2, rhs, t1, t2))
    t1 = (q**-x - q * g) * (1 - b * d * q ** (x + 1)) * (a - 1) * _R(n, x + 1, a / q, q * b, g, d / q, q)
    t2 = (q * g - gd * q ** (x + 1)) * (1 - q**-x * b / g) * (a - 1) * _R(n, x, a / q, q * b, g, d / q, q)
    rhs = (q**-x - gd * q ** (x + 1)) * (a - a * b * q ** (n + 1)) * (1 - q**-n / a) * _R(n, x, a, b, g, d, q)
    out.append(_rel(t1 + t2, rhs, t1, t2))
    t1 = (q**-x - q * a) * (1 - b * d * q ** (x + 1)) * (g - 1) * _R(n, x + 1, a, b, g / q, d, q)
    t2 = (q * a - gd * q ** (x + 1)) * (1 - q**-x * b / g) * (g - 1) * _R(n, x, a, b, g / q, d, q)
    rhs = (q**-x - gd * q ** (x + 1)) * (g - a * b * q ** (n + 1)) * (1 - q**-n / g) * _R(n, x, a, b, g, d, q)
    out.append(_rel(t1 + t2, rhs, t1, t2))
    return out


def hypergeometric_relation_check(params: QRacahParams, q, seed: int = 0, trials: int = 20) -> float:
    """Largest relative residual over the contiguous relations.

    The polynomial forms are evaluated over the whole support of ``params``;
    the raw 4phi3 relations at random parameters drawn with ``seed``.
    """
    worst = 0.0
    for n in range(params.M):
        for x in range(params.M):
            try:
                worst = max([worst, *qracah_relation_residuals(params, q, n, x)])
            except DegenerateParameters:
                continue
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        n = int(rng.integers(0, 6))
        b, c, d, u, v, w = rng.uniform(0.2, 3.0, 6) * rng.choice([-1, 1], 6)
        worst = max(worst, phi_relation_contiguous(q**-n, b, c, d, u, v, w, q, n))
        # balanced means u v w = q a b c d
        w = q ** (1 - n) * b * c * d / (u * v)
        worst = max(worst, phi_relation_balanced(q**-n, b, c, d, u, v, w, q, n))
    return worst


# ---------------------------------------------------------------------------
# Kasteleyn matrix and its inverse
#
# Left triangles sit at (t, x) with t < T, right triangles at (r, y) with
# r >= 1, each x ranging over its section. The lozenge (t,x)-(t,x) is a hole
# and (t,x)-(t+1,x), (t,x)-(t+1,x+1) are the two steps of a path.


def hole_entry(t: int, x: int, S: int, fac: QFactors):
    """Diagonal Kasteleyn entry ``-q^(-a) (1 - kappa^2 q^(2a))``, 2a = 2x-t-S+1."""
    two_a = 2 * x - t - S + 1
    return -_qpow(fac, -two_a / 2) * complex(fac.kf(two_a))


def _qpow(fac: QFactors, e: float) -> complex:
    if fac.classical:
        return 1.0 + 0j
    return cmath.exp(e * cmath.log(fac.q))


def _log_prod(values) -> complex:
    return complex(np.sum(np.log(np.asarray(values, dtype=complex)))) if np.size(values) else 0j


def conjugation_factor(t: int, x: int, ctx: KernelContext) -> complex:
    """Gauge ``g(t, x)`` turning the hole kernel into the inverse Kasteleyn matrix."""
    fac, dims, S = ctx.fac, ctx.dims, ctx.S
    N, T = dims.N, dims.T
    b = ctx.basis(t)
    log_sqrt_w = b.log_sqrt_weight(x)
    log_den = (
        _log_prod(fac.qf(-np.arange(1, S + N - x)))
        + _log_prod(fac.qf(np.arange(1, T - S + x - t + 1)))
        + _log_prod(fac.kf(x - T + 1 + np.arange(T + N - t)))
    )
    expo = x * (T + N - t - 1) + t * (S - 1) / 2 + t * (t + 1) / 4
    sign = -1 if (t + x) % 2 else 1
    return sign * _qpow(fac, expo) * complex(fac.kf(2 * x - t - S + 1)) * cmath.exp(-log_sqrt_w - log_den)


@dataclass
class KasteleynMatrix:
    left: list
    right: list
    matrix: np.ndarray

    def entry(self, white, black) -> complex:
        return self.matrix[self.left.index(tuple(white)), self.right.index(tuple(black))]


def kasteleyn_matrix(ctx: KernelContext) -> KasteleynMatrix:
    dims, S, fac = ctx.dims, ctx.S, ctx.fac
    left = [(t, x) for t in range(dims.T) for x in dims.section_points(t)]
    right = [(r, y) for r in range(1, dims.T + 1) for y in dims.section_points(r)]
    col = {p: j for j, p in enumerate(right)}
    M = np.zeros((len(left), len(right)), dtype=complex)
    for i, (t, x) in enumerate(left):
        if (t, x) in col:
            M[i, col[(t, x)]] = hole_entry(t, x, S, fac)
        for y in (x, x + 1):
            if (t + 1, y) in col:
                M[i, col[(t + 1, y)]] = 1.0
    return KasteleynMatrix(left, right, M)


def predicted_inverse(ctx: KernelContext, right: Sequence, left: Sequence) -> np.ndarray:
    """``g(r,y)/g(t,x) (delta - K)(r,y; t,x) / Kast(r,y; r,y)`` on the given triangles."""
    S, fac = ctx.S, ctx.fac
    out = np.zeros((len(right), len(left)), dtype=complex)
    for i, (r, y) in enumerate(right):
        gr = conjugation_factor(r, y, ctx)
        diag = hole_entry(r, y, S, fac)
        for j, (t, x) in enumerate(left):
            hole = (1.0 if (r, y) == (t, x) else 0.0) - ctx.printed_entry(r, y, t, x)
            out[i, j] = gr / conjugation_factor(t, x, ctx) * hole / diag
    return out


@dataclass
class InverseKasteleyn:
    lozenges: list
    matrix: np.ndarray
    probability: float
    identity_residual: float
    numeric_residual: float


def inverse_kasteleyn(lozenges: Sequence, dims: HexagonDims, params, ctx: KernelContext | None = None) -> InverseKasteleyn:
    """Probability of a set of lozenges, each a pair ``((t, x), (r, y))``.

    ``identity_residual`` measures the predicted inverse times the Kasteleyn
    matrix against the identity; ``numeric_residual`` compares it with a
    dense numerical inverse.
    """
    ctx = ctx or KernelContext(dims, params)
    kast = kasteleyn_matrix(ctx)
    pred = predicted_inverse(ctx, kast.right, kast.left)
    identity = pred @ kast.matrix
    ident_res = float(np.abs(identity - np.eye(len(kast.right))).max())
    numeric = np.linalg.inv(kast.matrix)
    num_res = float(np.abs(pred - numeric).max() / np.abs(numeric).max())
    lozenges = [(tuple(a), tuple(b)) for a, b in lozenges]
    rows = [kast.right.index(b) for _, b in lozenges]
    cols = [kast.left.index(a) for a, _ in lozenges]
    sub = pred[np.ix_(rows, cols)]
    weight = np.prod([kast.matrix[c, r] for c, r in zip(cols, rows)])
    prob = weight * np.linalg.det(sub) if lozenges else 1.0
    if abs(prob.imag) > 1e-8 * max(abs(prob), 1.0):
        raise InadmissibleParameters(f"lozenge probability is not real: {prob}")
    return InverseKasteleyn(lozenges, sub, float(prob.real), ident_res, num_res)


def single_lozenge_probability(ctx: KernelContext, left, right) -> float:
    """Probability of one lozenge using only two kernel entries (no dense inverse)."""
    (t, x), (r, y) = tuple(left), tuple(right)
    if (r, y) == (t, x):
        weight = hole_entry(t, x, ctx.S, ctx.fac)
    elif r == t + 1 and y - x in (0, 1):
        weight = 1.0
    else:
        raise ValueError(f"triangles {left} and {right} do not form a lozenge")
    inv = predicted_inverse(ctx, [(r, y)], [(t, x)])[0, 0]
    return float((weight * inv).real)
