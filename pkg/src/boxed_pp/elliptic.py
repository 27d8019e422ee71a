"""Elliptic lozenge weights, the explicit inverse Kasteleyn matrix and the elliptic MacMahon identity.

Lozenge coordinates: the horizontal lozenge with upper corner ``(i, j)``
has ``j`` a half-integer when ``i`` is odd, so ``j`` is passed doubled as
``j2 = 2 j``.  Triangles of the Kasteleyn matrix use the same coordinates
and satisfy ``j2 + i`` even.  The gauge ``C(i)`` is fixed to 1.

Parameters may be complex; fractional powers of ``q`` and of ``u1 u2``
use the principal branch, consistently across all functions here.
"""
from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .numerics import theta_p
from .oracle import enumerate_plane_partitions, plane_partition_to_tiling
from .weights import DegenerateParameters, HexagonDims, section_bounds

DEGENERATE_THETA = 1e-13


@dataclass(frozen=True)
class EllipticWeightCtx:
    p: complex
    q: complex
    u1: complex
    u2: complex

    def __post_init__(self):
        if not abs(self.p) < 1:
            raise ValueError(f"elliptic nome must satisfy |p| < 1, got {self.p}")
        if self.q == 0 or self.u1 == 0 or self.u2 == 0:
            raise ValueError("q, u1 and u2 must be nonzero")

    @property
    def u3(self) -> complex:
        return 1 / (self.u1 * self.u2)

    @property
    def zeta_sq(self) -> complex:
        """``zeta^2`` defined by ``u1 u2 = p q zeta^2`` (needs p != 0)."""
        return self.u1 * self.u2 / (self.p * self.q)

    def qpow(self, e: float):
        if float(e).is_integer():
            return self.q ** int(e)
        return complex(self.q) ** e

    def theta(self, x):
        return theta_p(x, self.p)

    def theta_poch(self, x, k: int):
        out = 1.0
        for _ in range(k):
            out *= self.theta(x)
            x = x * self.q
        return out

    def shifted(self, which: int) -> "EllipticWeightCtx":
        """Replace ``u_which`` by ``p u_which`` and ``u_{which+1}`` by ``u/p`` (indices mod 3)."""
        u = [self.u1, self.u2, self.u3]
        u[which % 3] *= self.p
        u[(which + 1) % 3] /= self.p
        return EllipticWeightCtx(self.p, self.q, u[0], u[1])


def _ratio(ctx: EllipticWeightCtx, num, den):
    top = 1.0
    for x in num:
        top *= ctx.theta(x)
    bottom = 1.0
    for x in den:
        v = ctx.theta(x)
        if abs(v) < DEGENERATE_THETA:
            raise DegenerateParameters(f"theta factor vanishes at argument {x}")
        bottom *= v
    return top / bottom


def elliptic_lozenge_weight(ctx: EllipticWeightCtx, i: int, j2: int):
    """Weight of the horizontal lozenge with upper corner ``(i, j2 / 2)``."""
    j = j2 / 2
    u12 = ctx.u1 * ctx.u2
    q = ctx.qpow
    pref = cmath.sqrt(u12) * q(j - 0.5)
    num = [q(2 * j - 1) * u12]
    den = [q(j - 1.5 * i - 1) * ctx.u1, q(j - 1.5 * i) * ctx.u1, q(j + 1.5 * i - 1) * ctx.u2, q(j + 1.5 * i) * ctx.u2]
    return pref * _ratio(ctx, num, den)


def lozenge_weight_ratio(ctx: EllipticWeightCtx, i: int, j2: int):
    """``w(i, j+1) / w(i, j)`` from the first-order recurrence in j."""
    j = j2 / 2
    q, u1, u2 = ctx.qpow, ctx.u1, ctx.u2
    num = [q(j - 1.5 * i - 1) * u1, q(j + 1.5 * i - 1) * u2, q(2 * j + 1) * u1 * u2]
    den = [q(j - 1.5 * i + 1) * u1, q(j + 1.5 * i + 1) * u2, q(2 * j - 1) * u1 * u2]
    return ctx.q * _ratio(ctx, num, den)


def qracah_limit_residual(q: float, zeta: float, p: float = 1e-8, i: int = 0, j2_values=range(-3, 6)) -> float:
    """How far the weight with ``u1 = u2 = sqrt(p q) zeta`` is from ``zeta q^j - 1/(zeta q^j)``.

    Both sides are compared up to a common constant; the deviation is
    O(sqrt(p)) as p goes to 0.
    """
    u = cmath.sqrt(p * q) * zeta
    ctx = EllipticWeightCtx(p, q, u, u)
    ratios = []
    for j2 in j2_values:
        j = j2 / 2
        target = zeta * q**j - 1 / (zeta * q**j)
        ratios.append(elliptic_lozenge_weight(ctx, i, j2) / target)
    ratios = np.array(ratios)
    return float(np.abs(ratios / ratios[0] - 1).max())


def cube_weight(ctx: EllipticWeightCtx, x: float, y: float, z: float):
    """Weight of the cube with centroid (x, y, z)."""
    q = ctx.qpow
    u = (ctx.u1, ctx.u2, ctx.u3)
    e = (y + z - 2 * x, x + z - 2 * y, x + y - 2 * z)
    return ctx.q**3 * _ratio(ctx, [q(e[k] - 1) * u[k] for k in range(3)], [q(e[k] + 1) * u[k] for k in range(3)])


# ---------------------------------------------------------------------------
# Inverse Kasteleyn matrix


def _check_triangle(i: int, j2: int) -> None:
    if (j2 + i) % 2:
        raise ValueError(f"({i}, {j2}/2) is not a lattice triangle: j2 + i must be even")


def kasteleyn_entry(ctx: EllipticWeightCtx, left, right):
    """The Kasteleyn weight ``w(left, right)`` between triangles ``(i, j2)``."""
    (i0, a), (i1, b) = left, right
    if (i1, b) == (i0, a):
        return elliptic_lozenge_weight(ctx, i0, a)
    if i1 == i0 + 1 and b in (a - 1, a + 1):
        return 1.0
    return 0.0


def kasteleyn_inverse_W(ctx: EllipticWeightCtx, first, second):
    """Closed form of the inverse transpose of the Kasteleyn weights.

    ``first = (i0, j2_0)`` and ``second = (i1, j2_1)``.  The value vanishes
    unless ``i0 < i1`` and ``j1 + i1/2 <= j0 + i0/2``.
    """
    (i0, J0), (i1, J1) = first, second
    _check_triangle(i0, J0)
    _check_triangle(i1, J1)
    if i0 >= i1 or J1 + i1 > J0 + i0:
        return 0.0
    n = i1 - i0 - 1
    q, u1, u2 = ctx.qpow, ctx.u1, ctx.u2
    u12 = u1 * u2
    sign = -1 if ((J0 - i0 - J1 + i1) // 2 - 1) % 2 else 1
    pref = sign * cmath.sqrt(u12) ** n * q(n * (i1 - i0 + 2 * J1 - 2) / 4)
    top = ctx.theta_poch(q((J0 + i0 - J1 - i1) / 2 + 1), n) * ctx.theta_poch(q((J0 + i0 + J1 - i1) / 2) * u12, n)
    den_args = [ctx.q, q((J0 - i0) / 2 - i1) * u1, q((J1 - 3 * i1) / 2 + 1) * u1, q(J1 / 2 + i0 + i1 / 2) * u2,
                q((J0 + 3 * i0) / 2 + 1) * u2]
    bottom = 1.0
    for x in den_args:
        v = ctx.theta_poch(x, n)
        if abs(v) < DEGENERATE_THETA:
            raise DegenerateParameters(f"theta factor vanishes in W at {first}, {second}")
        bottom *= v
    return pref * top / bottom


def parallelogram(x0: int, x1: int, y0: int, y1: int) -> list[tuple[int, int]]:
    """Triangles ``(i, j2)`` with ``x0 <= i <= x1`` and ``y0 <= j + i/2 <= y1``."""
    return [(i, 2 * m - i) for i in range(x0, x1 + 1) for m in range(y0, y1 + 1)]


def inverse_identity_residual(ctx: EllipticWeightCtx, triangles) -> float:
    """Max deviation of ``sum_b W(a0, b) w(a1, b)`` from ``delta(a0, a1)``.

    The sum runs over the three neighbours ``b`` of ``a1``: itself and the
    two triangles one step to the right.
    """
    worst = 0.0
    for a0 in triangles:
        for a1 in triangles:
            i1, J1 = a1
            total = kasteleyn_inverse_W(ctx, a0, a1) * elliptic_lozenge_weight(ctx, i1, J1)
            total += kasteleyn_inverse_W(ctx, a0, (i1 + 1, J1 - 1))
            total += kasteleyn_inverse_W(ctx, a0, (i1 + 1, J1 + 1))
            worst = max(worst, abs(total - (a0 == a1)))
    return worst


def numeric_inverse(ctx: EllipticWeightCtx, x0: int, x1: int, y0: int, y1: int) -> dict:
    """Inverse transpose of the Kasteleyn weights on a finite region, by linear algebra.

    Rows are the triangles of the parallelogram; columns are the same
    triangles moved one step right at fixed ``j + i/2``.  Every neighbour
    that can carry a nonzero entry then lies inside, so the finite inverse
    agrees with the infinite one.
    """
    rows = parallelogram(x0, x1, y0, y1)
    cols = [(i + 1, J - 1) for i, J in rows]
    M = np.array([[kasteleyn_entry(ctx, a, b) for b in cols] for a in rows], dtype=complex)
    inv_t = np.linalg.inv(M.T)
    return {(a, b): inv_t[r, c] for r, a in enumerate(rows) for c, b in enumerate(cols)}


def addition_law_residual(ctx: EllipticWeightCtx, first, second) -> float:
    """Three-term theta addition law at the substitution used for the inverse identity.

    Only meaningful where all three terms of that identity survive:
    ``i0 < i1`` and ``j1 + i1/2 < j0 + i0/2``.
    """
    (i0, J0), (i1, J1) = first, second
    if not (i0 < i1 and J1 + i1 < J0 + i0):
        raise ValueError("the addition law is used only when i0 < i1 and j1 + i1/2 < j0 + i0/2")
    q = ctx.qpow
    a0 = q(-J0 / 4 - 3 * i0 / 4 + J1 / 4 + 3 * i1 / 4)
    a1 = q(J0 / 4 - i0 / 4 + J1 / 4 - 5 * i1 / 4 - 1) * ctx.u1
    a2 = q(J0 / 4 + 3 * i0 / 4 + J1 / 4 + 3 * i1 / 4) * ctx.u2
    z = q(J0 / 4 - i0 / 4 - J1 / 4 + i1 / 4)
    th = ctx.theta
    terms = [
        th(a0 * z) * th(a1 * z) * th(a2 * z) * th(a0 * a1 * a2 / z),
        -th(a0 * a1) * th(a0 * a2) * th(a1 * a2) * th(z * z),
        th(z / a0) * th(a1 / z) * th(a2 / z) * th(a0 * a1 * a2 * z) * z * a0,
    ]
    return abs(sum(terms)) / max(abs(v) for v in terms)


# ---------------------------------------------------------------------------
# Trapezoid weight sums


@dataclass(frozen=True)
class Trapezoid:
    """Geometry of the left or right trapezoid.

    Sources sit on the vertical line ``i0 - k`` and sinks on ``i0 + I``
    (left), or sources on ``i0 + I`` and sinks on ``i0 + a - c + l``
    (right); ``c`` is the number of holes and a, b fix the hexagon.
    """

    i0: int
    j0_2: int
    I: int
    c: int
    a: int = 0
    b: int = 0


def _left_pairs(geo: Trapezoid, holes):
    i0, J0, I = geo.i0, geo.j0_2, geo.I
    sources = [(i0 - k, J0 - k + 2) for k in range(1, geo.c + 1)]
    sinks = [(i0 + I, J0 - I - 2 * x) for x in holes]
    return sources, sinks


def _right_pairs(geo: Trapezoid, holes):
    i0, J0, I, a, b, c = geo.i0, geo.j0_2, geo.I, geo.a, geo.b, geo.c
    sources = [(i0 + I, J0 - I - 2 * x) for x in holes]
    sinks = [(i0 + a - c + l, J0 - a - 2 * b - c + l) for l in range(1, c + 1)]
    return sources, sinks


def kasteleyn_determinant(ctx: EllipticWeightCtx, side: str, geo: Trapezoid, holes):
    """``det W`` between the sources and sinks of the trapezoid with the given holes."""
    sources, sinks = (_left_pairs if side == "left" else _right_pairs)(geo, holes)
    M = np.array([[kasteleyn_inverse_W(ctx, s, f) for f in sinks] for s in sources], dtype=complex)
    return np.linalg.det(M)


def region_for(sources, sinks, pad: int = 1) -> tuple[int, int, int, int]:
    """A parallelogram ``(x0, x1, y0, y1)`` holding the sources as rows and the sinks as columns."""
    ms = [(J + i) // 2 for i, J in sources] + [(J + i) // 2 for i, J in sinks]
    x0 = min(i for i, _ in sources) - pad
    x1 = max(max(i for i, _ in sources), max(i for i, _ in sinks) - 1) + pad
    return x0, x1, min(ms) - pad, max(ms) + pad


def matching_weight_sum(ctx: EllipticWeightCtx, region, removed_rows, removed_cols, cap: int = 10_000):
    """Exhaustive weighted count of perfect matchings after removing triangles.

    Rows are the triangles of the parallelogram ``region`` and columns the
    same triangles moved one step right, as in :func:`numeric_inverse`.
    Returns ``(total weight, number of matchings)``; more than ``cap``
    matchings raises.
    """
    rows = [a for a in parallelogram(*region) if a not in set(removed_rows)]
    cols = {(i + 1, J - 1) for i, J in parallelogram(*region)} - set(removed_cols)
    if len(rows) != len(cols):
        raise ValueError("removing these triangles leaves no perfect matching")
    weights = {}
    used = set()
    total = 0.0
    count = 0

    def rec(k, acc):
        nonlocal total, count
        if k == len(rows):
            total += acc
            count += 1
            if count > cap:
                raise ValueError(f"more than {cap} matchings")
            return
        a = rows[k]
        i, J = a
        for b in ((i, J), (i + 1, J - 1), (i + 1, J + 1)):
            if b in cols and b not in used:
                if b == a:
                    w = weights.get(a)
                    if w is None:
                        w = weights[a] = elliptic_lozenge_weight(ctx, i, J)
                else:
                    w = 1.0
                used.add(b)
                rec(k + 1, acc * w)
                used.discard(b)

    rec(0, 1.0)
    return total, count


def trapezoid_pairs(side: str, geo: "Trapezoid", holes):
    return (_left_pairs if side == "left" else _right_pairs)(geo, holes)


def trapezoid_weight_sum(ctx: EllipticWeightCtx, side: str, geo: Trapezoid, holes):
    """Product formula for the total tiling weight, up to a hole-independent constant."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    q, u1, u2 = ctx.qpow, ctx.u1, ctx.u2
    u12 = u1 * u2
    i0, J0, I, c = geo.i0, geo.j0_2, geo.I, geo.c
    j0 = J0 / 2
    a, b = geo.a, geo.b
    out = 1.0
    for x in holes:
        if side == "left":
            num = [q(I + 1), q(I - j0 + 1.5 * i0) / u1, q(-I + 2 - j0 - 1.5 * i0) / u2, q(I + 1 - 2 * j0) / u12]
            den = [ctx.q, q(2 * I - j0 + 1.5 * i0) / u1, q(2 - j0 - 1.5 * i0) / u2, q(1 - 2 * j0) / u12]
            cross = [q(1 - I + j0 - 1.5 * i0 - x) * u1, q(x - j0 - 1.5 * i0 + 2) / u2]
        else:
            num = [q(1 - b - c), q(2 * I - j0 + 2 + 1.5 * i0) / u1, q(-a + c - j0 - 1.5 * i0) / u2, q(-2 * j0 + a + b + 1) / u12]
            den = [q(I - a - b + 1), q(I + 2 - j0 + 1.5 * i0 + a - c) / u1, q(-I - j0 - 1.5 * i0) / u2,
                   q(I - 2 * j0 + b + c + 1) / u12]
            cross = [q(x + I - j0 + 1.5 * i0 + 2 + a - c) / u1, q(j0 + 1.5 * i0 + a + 1 - c - x) * u2]
        term = (-1) ** x
        for arg in num:
            term *= ctx.theta_poch(arg, x)
        for arg in den:
            term /= ctx.theta_poch(arg, x)
        for arg in cross:
            term /= ctx.theta_poch(arg, c - 1)
        out *= term
    for k, l in itertools.combinations(range(len(holes)), 2):
        xk, xl = holes[k], holes[l]
        out *= q(-xk) * ctx.theta(q(xk - xl)) * ctx.theta(q(xk + xl + I - 2 * j0 + 1) / u12)
    return out


# ---------------------------------------------------------------------------
# MacMahon identity


@dataclass
class IdentityCheck:
    identity: str
    params: dict
    lhs: complex
    rhs: complex

    @property
    def rel_err(self) -> float:
        return abs(self.lhs - self.rhs) / max(abs(self.rhs), 1e-300)


ENUMERATION_CAP = 200_000


def _partitions(a: int, b: int, c: int):
    from .oracle import macmahon_count

    if macmahon_count(a, b, c) > ENUMERATION_CAP:
        raise ValueError(f"{a}x{b}x{c} has more than {ENUMERATION_CAP} plane partitions")
    return enumerate_plane_partitions(a, b, c)


def partition_term(ctx: EllipticWeightCtx, pp) -> complex:
    """Product of cube weights over the cubes of a plane partition."""
    out = 1.0
    a, b = pp.shape
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            for k in range(1, int(pp[i - 1, j - 1]) + 1):
                out *= cube_weight(ctx, i, j, k)
    return out


def elliptic_macmahon(ctx: EllipticWeightCtx, a: int, b: int, c: int) -> IdentityCheck:
    lhs = sum(partition_term(ctx, pp) for pp in _partitions(a, b, c))
    q, u = ctx.qpow, (ctx.u1, ctx.u2, ctx.u3)
    rhs = ctx.q ** (a * b * c)
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            for k in range(1, c + 1):
                e = (j + k - i, i + k - j, i + j - k)
                num = [q(i + j + k - 1)] + [q(e[m] - 1) * u[m] for m in range(3)]
                den = [q(i + j + k - 2)] + [q(e[m]) * u[m] for m in range(3)]
                rhs *= _ratio(ctx, num, den)
    params = {"p": ctx.p, "q": ctx.q, "u1": ctx.u1, "u2": ctx.u2, "a": a, "b": b, "c": c}
    return IdentityCheck("elliptic", params, complex(lhs), complex(rhs))


def zeta_macmahon(q, zeta, a: int, b: int, c: int) -> IdentityCheck:
    """The ``p -> 0`` form of the identity, summed over plane partitions."""
    z2 = zeta * zeta
    lhs = 0.0
    for pp in _partitions(a, b, c):
        term = q ** int(pp.sum())
        for i in range(1, a + 1):
            for j in range(1, b + 1):
                term *= (z2 - q ** (i + j - 2 * int(pp[i - 1, j - 1]) - 2)) / (z2 - q ** (i + j - c - 2))
        lhs += term
    rhs = 1.0
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            rhs *= (1 - q ** (i + j + c - 1)) / (1 - q ** (i + j - 1))
    return IdentityCheck("zeta", {"q": q, "zeta": zeta, "a": a, "b": b, "c": c}, complex(lhs), complex(rhs))


def macmahon_check(source, a: int, b: int, c: int) -> IdentityCheck:
    """Both sides of the MacMahon-type identity for a, b, c.

    ``source`` is an :class:`EllipticWeightCtx` for the elliptic form or a
    pair ``(q, zeta)`` for the degenerate form.
    """
    if isinstance(source, EllipticWeightCtx):
        return elliptic_macmahon(source, a, b, c)
    q, zeta = source
    return zeta_macmahon(q, zeta, a, b, c)


def tiling_weight(ctx: EllipticWeightCtx, tiling, dims: HexagonDims) -> complex:
    """Product of elliptic hole weights over the horizontal lozenges of a tiling."""
    out = 1.0
    for t in range(1, dims.T):
        lo, hi = section_bounds(dims.N, dims.T, dims.S, t)
        occupied = set(tiling.slices[t])
        for x in range(lo, hi + 1):
            if x not in occupied:
                out *= elliptic_lozenge_weight(ctx, t, 2 * x - t + 2)
    return out


def cube_params_for_tilings(ctx: EllipticWeightCtx, c: int) -> EllipticWeightCtx:
    """Cube-weight parameters matching the hole weights of :func:`tiling_weight`.

    With holes at ``i = t``, ``j = x - t/2 + 1``, adding the cube at row i,
    column j, height k of a plane partition multiplies the tiling weight by
    the cube weight at ``(i, j, k - c)`` with ``(u3, u1, u2)`` in place of
    ``(u1, u2, u3)``.  The shift by c is absorbed into the parameters.
    """
    q = ctx.q
    return EllipticWeightCtx(ctx.p, q, ctx.u3 * q ** (-c), ctx.u1 * q ** (-c))


def partition_term_residual(ctx: EllipticWeightCtx, a: int, b: int, c: int) -> float:
    """Max relative gap between cube-weight products and tiling-weight ratios to the empty partition."""
    dims = HexagonDims(a, b, c)
    cube_ctx = cube_params_for_tilings(ctx, c)
    empty = tiling_weight(ctx, plane_partition_to_tiling(np.zeros((a, b), dtype=int), dims), dims)
    worst = 0.0
    for pp in _partitions(a, b, c):
        ratio = tiling_weight(ctx, plane_partition_to_tiling(pp, dims), dims) / empty
        term = partition_term(cube_ctx, pp)
        worst = max(worst, abs(term - ratio) / abs(ratio))
    return worst


def report_table(checks) -> str:
    lines = [f"{'identity':<10} {'parameters':<60} {'lhs':>26} {'rhs':>26} {'rel_err':>10}"]
    for chk in checks:
        par = ", ".join(f"{k}={v:.4g}" if isinstance(v, (float, complex)) else f"{k}={v}" for k, v in chk.params.items())
        lines.append(f"{chk.identity:<10} {par:<60} {chk.lhs:>26.12g} {chk.rhs:>26.12g} {chk.rel_err:>10.2e}")
    return "\n".join(lines)
