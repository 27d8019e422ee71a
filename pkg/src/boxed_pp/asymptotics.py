"""Bulk limit of the tiling measure: local slopes, the limit kernel and the frozen boundary.

All coordinates here are macroscopic: a hexagon with sides ``(N, T - S, S)``
scaled by ``1/L`` has sides ``(N/L, (T-S)/L, S/L)`` and ``q = qq**(1/L)``,
where ``qq`` is the macroscopic base stored in :class:`ScaledGeometry`.

The local slope at a point is encoded by ``z`` in the upper half-plane; the
triangle ``(0, 1, z)`` has angles ``pi * (p1, p2, p3)``.  We assign

* ``p1`` (angle at 0) to horizontal lozenges, i.e. holes, so ``1 - p1`` is
  the path density ``phi / pi``;
* ``p2`` (angle at 1) to path steps ``x -> x + 1``;
* ``p3`` (angle at z) to path steps ``x -> x``.

This assignment was fixed by comparing with exact finite-size lozenge
probabilities from :mod:`boxed_pp.kernel` (see the test suite).
"""
from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import integrate, optimize

from .weights import Hahn, HexagonDims, QHahn, QRacah, QRacahTrig, Racah

SURROGATE_STEP = 1e-4


class DegenerateQuadratic(ValueError):
    """The quadratic for z loses its leading coefficient (edge of validity)."""


class TraceError(RuntimeError):
    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class ScaledGeometry:
    S: float
    T: float
    N: float
    q: complex
    kappa_sq: complex = 0.0

    def __post_init__(self):
        if not (0 < self.S < self.T and self.N > 0):
            raise ValueError(f"need 0 < S < T and N > 0, got S={self.S}, T={self.T}, N={self.N}")
        if self.q == 1:
            raise ValueError("q = 1 exactly is degenerate; use a surrogate such as 1 - 1e-4")
        self._check_hole_weight()

    def hole_weight(self, e):
        """Macroscopic hole weight ``(1 - kappa^2 q^e) q^(-e/2)`` at ``e = 2x - t - S``."""
        return (1 - self.kappa_sq * self.q**e) * self.q ** (-e / 2)

    def _check_hole_weight(self) -> None:
        # e runs over [-T, 2N]; zeros are allowed only at the two extreme vertices
        es = np.linspace(-self.T, 2 * self.N, 401)
        vals = np.array([complex(self.hole_weight(e)) for e in es])
        ref = vals[np.argmax(np.abs(vals))]
        vals = vals / ref
        if np.abs(vals.imag).max() > 1e-9:
            raise ValueError("hole weights do not share a phase")
        if vals.real[1:-1].min() <= 0:
            raise ValueError("hole weight changes sign inside the hexagon")

    @classmethod
    def from_hexagon(cls, dims: HexagonDims, params, scale: float) -> "ScaledGeometry":
        """Macroscopic geometry of a finite hexagon shrunk by ``scale``.

        Hahn and Racah have ``q = 1`` and are represented by the surrogate
        ``qq = 1 - SURROGATE_STEP``; Racah then uses ``kappa^2 = qq^(2K/scale)``.
        """
        S, T, N = dims.S / scale, dims.T / scale, dims.N / scale
        if isinstance(params, QRacah):
            return cls(S, T, N, params.q**scale, params.kappa_sq)
        if isinstance(params, QHahn):
            return cls(S, T, N, params.q**scale, 0.0)
        if isinstance(params, QRacahTrig):
            return cls(S, T, N, cmath.exp(1j * params.alpha * scale), cmath.exp(2j * params.beta))
        qq = 1 - SURROGATE_STEP
        if isinstance(params, Racah):
            return cls(S, T, N, qq, qq ** (2 * params.K / scale))
        if isinstance(params, Hahn):
            return cls(S, T, N, qq, 0.0)
        raise TypeError(f"no bulk limit for {params!r}")

    def section(self, t: float) -> tuple[float, float]:
        return max(0.0, t + self.S - self.T), min(t + self.N, self.S + self.N)

    def contains(self, t: float, x: float) -> bool:
        lo, hi = self.section(t)
        return 0 <= t <= self.T and lo <= x <= hi

    def vertices(self) -> list[tuple[float, float]]:
        S, T, N = self.S, self.T, self.N
        return [(0.0, 0.0), (0.0, N), (S, S + N), (T, S + N), (T, S), (T - S, 0.0)]

    def sides(self) -> dict:
        v = self.vertices()
        names = ["t=0", "x=t+N", "x=S+N", "t=T", "x=t+S-T", "x=0"]
        return {name: (v[i], v[(i + 1) % 6]) for i, name in enumerate(names)}

    @property
    def is_real(self) -> bool:
        return np.isreal(self.q) and np.isreal(self.kappa_sq)


@dataclass(frozen=True)
class QPoly:
    """``uu u^2 + vv v^2 + uv u v + v_ v + u_ u + const``."""

    uu: complex
    vv: complex
    uv: complex
    v: complex
    u: complex
    const: complex

    def __call__(self, u, v):
        return self.uu * u * u + self.vv * v * v + self.uv * u * v + self.v * v + self.u * u + self.const


NEAR_CLASSICAL = 0.05
WORKING_DIGITS = 40


def _base(geom: ScaledGeometry):
    """``(q, kappa^2)`` in working precision.

    Near ``q = 1`` the quadratic coefficients cancel to second order in
    ``1 - q``, so they are evaluated with mpmath there.
    """
    if abs(geom.q - 1) < NEAR_CLASSICAL:
        q = mpmath.mpmathify(geom.q)
        k2 = mpmath.mpmathify(geom.kappa_sq)
        return q, k2
    return geom.q, geom.kappa_sq


def q_polynomial(geom: ScaledGeometry) -> QPoly:
    S, T, N = geom.S, geom.T, geom.N
    q, k2 = _base(geom)
    k4 = k2 * k2
    vv = q ** (T - S - N) + k2 * (1 + q ** (-S + N + T) + q ** (-2 * S + T) + q ** (-S - N) - q**-S - q ** (-S + T)) + k4 * q ** (-S + N)
    uv = q ** (T - S) + q**-N + k2 * (q**N + q**-S)
    v = -(q**T + q ** (T - S - N) + k2 * (1 + q ** (N - S + T)))
    u = -(1 + q**T)
    return QPoly(1.0, vv, uv, v, u, q**T)


def uv_of_z(geom: ScaledGeometry, t: float, x: float, z):
    """The two first integrals ``(u, v)`` at (t, x) for slope parameter z."""
    q, k2, S = geom.q, geom.kappa_sq, geom.S
    den = 1 - z * k2 * q ** (-S + 2 * x - t)
    return (z * q**t - k2 * q ** (-S + 2 * x)) / den, (1 - z) * q**x / den


def _normalized_quadratic(geom: ScaledGeometry, t: float, x: float) -> list:
    Q = q_polynomial(geom)
    q, k2 = _base(geom)
    S = geom.S
    a, b = q**t, k2 * q ** (-S + 2 * x)
    d, e = k2 * q ** (-S + 2 * x - t), q**x
    U, V, W = (-b, a), (e, -e), (1.0, -d)

    def mul(X, Y):
        return [X[0] * Y[0], X[0] * Y[1] + X[1] * Y[0], X[1] * Y[1]]

    terms = [(Q.uu, U, U), (Q.vv, V, V), (Q.uv, U, V), (Q.v, V, W), (Q.u, U, W), (Q.const, W, W)]
    c = [0, 0, 0]
    for coef, X, Y in terms:
        c = [ci + coef * mi for ci, mi in zip(c, mul(X, Y))]
    big = max(c, key=abs)
    if big == 0:
        raise DegenerateQuadratic(f"quadratic vanishes identically at (t={t}, x={x})")
    # divide out the common phase and the overall size
    c = [ci / big for ci in c]
    if max(abs(complex(ci).imag) for ci in c) > 1e-9:
        raise ValueError("quadratic coefficients do not share a phase")
    return [ci.real if hasattr(ci, "real") else ci for ci in c]


def z_quadratic(geom: ScaledGeometry, t: float, x: float) -> np.ndarray:
    """Coefficients ``(c0, c1, c2)`` of ``Q(u(z), v(z)) (1 - z d)^2`` in z.

    The result is real and scaled so that its largest entry is 1; for the
    trigonometric family this divides out a common complex phase.
    """
    with mpmath.workdps(WORKING_DIGITS):
        return np.array([float(ci) for ci in _normalized_quadratic(geom, t, x)])


def discriminant(geom: ScaledGeometry, t: float, x: float) -> float:
    """Scale-free discriminant; negative exactly where the point is liquid."""
    with mpmath.workdps(WORKING_DIGITS):
        c0, c1, c2 = _normalized_quadratic(geom, t, x)
        return float(c1 * c1 - 4 * c0 * c2)


def slope_from_z(z) -> tuple[float, float, float]:
    """Angles of the triangle ``(0, 1, z)`` over pi; real z gives a frozen triple."""
    z = complex(z)
    if z.imag > 0:
        p1 = cmath.phase(z) / math.pi
        p2 = (math.pi - cmath.phase(z - 1)) / math.pi
        return p1, p2, 1 - p1 - p2
    if z.real < 0:
        return 1.0, 0.0, 0.0
    if z.real > 1:
        return 0.0, 1.0, 0.0
    return 0.0, 0.0, 1.0


@dataclass
class LocalSlope:
    t: float
    x: float
    z: complex | None
    p1: float
    p2: float
    p3: float
    frozen: bool
    phi: float | None = None
    c: float | None = None
    A: float | None = None
    B: float | None = None
    roots: tuple = field(default_factory=tuple)


def local_z(geom: ScaledGeometry, t: float, x: float) -> LocalSlope:
    c0, c1, c2 = z_quadratic(geom, t, x)
    if abs(c2) < 1e-12 * max(abs(c0), abs(c1), 1e-300):
        raise DegenerateQuadratic(f"leading coefficient vanishes at (t={t}, x={x})")
    roots = np.roots([c2, c1, c0])
    if discriminant(geom, t, x) < 0:
        z = complex(roots[np.argmax(roots.imag)])
        return LocalSlope(t, x, z, *slope_from_z(z), frozen=False, roots=tuple(roots))
    # both roots real; for admissible weights they fall in the same one of
    # (-inf, 0), (0, 1), (1, inf), so either root gives the frozen type
    z = float(np.real(roots[0]))
    return LocalSlope(t, x, None, *slope_from_z(z), frozen=True, roots=tuple(np.real(roots)))


@dataclass
class PhiC:
    phi: float
    c: float
    A: float
    B: float
    ratio: float


def _as_real(value, what: str) -> float:
    value = complex(value)
    if abs(value.imag) > 1e-9 * max(abs(value), 1.0):
        raise ValueError(f"{what} is not real ({value}); the closed form needs real parameters")
    return value.real


def _closed_form_parts(geom: ScaledGeometry, t: float, x: float):
    S, T, N, q, k2 = geom.S, geom.T, geom.N, geom.q, geom.kappa_sq
    A = (1 - q ** (-S - N + x)) * (1 - k2 * q ** (-T + x)) * (1 - q ** (-t - N + x)) * (1 - k2 * q ** (-t - S + x))
    B = q ** (-2 * N - T) * (1 - q**x) * (1 - k2 * q ** (-t + N + x)) * (1 - q ** (-t - S + T + x)) * (1 - k2 * q ** (-S + N + x))
    E = q**-N * (1 - q**N) * (1 - q ** (-T - N)) * (1 - k2 * q ** (-t - S + 2 * x)) ** 2 + A + B
    c2 = (
        q ** (T - 2 * t) * (1 - q ** (-(S + N - x))) * (1 - q**x) / ((1 - q ** (x + T - t - S)) * (1 - q ** (-t - N + x)))
        * (1 - k2 * q ** (x + N - S)) * (1 - k2 * q ** (x - T)) / ((1 - k2 * q ** (x + N - t)) * (1 - k2 * q ** (x - t - S)))
    )
    return A, B, E, c2


def phi_and_c(geom: ScaledGeometry, t: float, x: float) -> PhiC:
    """Path density angle phi and the scale c of the limit kernel.

    The arccos argument is clamped: above 1 gives phi = 0, below -1 gives
    phi = pi. When ``A B <= 0`` the argument is not defined; we then take
    phi = 0 if the numerator is positive and pi otherwise, which is the
    limit of the clamp as ``sqrt(A B) -> 0+``.
    """
    A, B, E, c2 = (_as_real(v, name) for v, name in zip(_closed_form_parts(geom, t, x), "ABEc"))
    c = math.sqrt(c2) if c2 >= 0 else math.nan
    if A * B <= 0:
        return PhiC(0.0 if E > 0 else math.pi, c, A, B, math.copysign(math.inf, E))
    ratio = E / (2 * math.sqrt(A * B))
    if ratio >= 1:
        phi = 0.0
    elif ratio <= -1:
        phi = math.pi
    else:
        phi = math.acos(ratio)
    return PhiC(phi, c, A, B, ratio)


def closed_form_z(geom: ScaledGeometry, t: float, x: float) -> complex:
    """The explicit expression for z equal to ``-c e^{i phi}`` on the liquid region.

    It lies in the lower half-plane: it is the complex conjugate of the root
    returned by :func:`local_z`.
    """
    S, T, N, q, k2 = geom.S, geom.T, geom.N, geom.q, geom.kappa_sq
    A, B, E, _ = _closed_form_parts(geom, t, x)
    pref = 0.5 * q ** (T + N - t) / (
        (1 - q ** (x + T - t - S)) * (1 - q ** (-t - N + x)) * (1 - k2 * q ** (-t + N + x)) * (1 - k2 * q ** (x - t - S))
    )
    return complex(pref * (E + 1j * cmath.sqrt(4 * A * B - E * E)))


def local_slope(geom: ScaledGeometry, t: float, x: float) -> LocalSlope:
    """:func:`local_z` completed with phi, c, A and B."""
    out = local_z(geom, t, x)
    pc = phi_and_c(geom, t, x)
    out.phi, out.c, out.A, out.B = pc.phi, pc.c, pc.A, pc.B
    return out


def bulk_kernel(dx: int, dt: int, slope: LocalSlope) -> float:
    """Limit kernel ``(1/2 pi i) int (1 + c w)^dt w^(dx-1) dw`` over an arc.

    ``dx = x - y`` and ``dt = t - s`` for the entry ``(x, s; y, t)``. The arc
    joins ``e^{-i phi}`` to ``e^{i phi}`` through 1 when ``dt <= 0`` and
    through -1 otherwise. Frozen slopes give the deterministic indicator.
    """
    phi = slope.phi
    if slope.frozen or phi in (0.0, math.pi):
        return (phi / math.pi) if (dx == 0 and dt == 0) else 0.0
    if dt == 0:
        return phi / math.pi if dx == 0 else math.sin(phi * dx) / (math.pi * dx)
    c = slope.c

    def integrand(theta, part):
        w = cmath.exp(1j * theta)
        val = (1 + c * w) ** dt * w**dx
        return val.real if part == 0 else val.imag

    lo, hi = (-phi, phi) if dt <= 0 else (phi - 2 * math.pi, -phi)
    sign = 1.0 if dt <= 0 else -1.0
    panels = max(50, 4 * (abs(dt) + abs(dx)))
    re = integrate.quad(integrand, lo, hi, args=(0,), limit=panels, epsabs=1e-13, epsrel=1e-12)[0]
    im = integrate.quad(integrand, lo, hi, args=(1,), limit=panels, epsabs=1e-13, epsrel=1e-12)[0]
    if abs(im) > 1e-9 * max(abs(re), 1.0):
        raise ValueError(f"limit kernel is not real: {re} + {im}i")
    return sign * re / (2 * math.pi)


def bulk_correlation(offsets, slope: LocalSlope) -> float:
    """``det[K(x_i, t_i; x_j, t_j)]`` for points given as offsets ``(dt_i, dx_i)``."""
    pts = list(offsets)
    K = np.array([[bulk_kernel(xi - xj, tj - ti, slope) for (tj, xj) in pts] for (ti, xi) in pts])
    return float(np.linalg.det(K))


# ---------------------------------------------------------------------------
# Frozen boundary


@dataclass
class BoundaryTrace:
    points: np.ndarray
    tangency: dict
    columns: int
    split_columns: list

    def closed(self) -> np.ndarray:
        return np.vstack([self.points, self.points[:1]])


def _liquid_intervals(geom: ScaledGeometry, t: float, samples: int) -> list[tuple[float, float]]:
    lo, hi = geom.section(t)
    if hi - lo <= 0:
        return []
    xs = np.linspace(lo, hi, samples)
    vals = np.array([discriminant(geom, t, x) for x in xs])
    best = int(np.argmin(vals))
    if vals[best] >= 0:
        # a thin liquid sliver may sit between samples
        a, b = xs[max(best - 1, 0)], xs[min(best + 1, samples - 1)]
        res = optimize.minimize_scalar(lambda x: discriminant(geom, t, x), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-14})
        if res.fun >= 0:
            return []
        xs = np.sort(np.append(xs, res.x))
        vals = np.array([discriminant(geom, t, x) for x in xs])
    f = lambda x: discriminant(geom, t, x)
    edges = []
    for i in range(len(xs) - 1):
        if (vals[i] < 0) != (vals[i + 1] < 0):
            edges.append(optimize.brentq(f, xs[i], xs[i + 1], xtol=1e-14))
    neg = vals < 0
    if neg[0]:
        edges.insert(0, xs[0])
    if neg[-1]:
        edges.append(xs[-1])
    return [(edges[i], edges[i + 1]) for i in range(0, len(edges) - 1, 2)]


def _segment_distance(p, a, b) -> float:
    p, a, b = map(np.asarray, (p, a, b))
    ab = b - a
    s = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0, 1)
    return float(np.linalg.norm(p - (a + s * ab)))


def frozen_boundary(geom: ScaledGeometry, resolution: int = 400) -> BoundaryTrace:
    """Trace the boundary of the liquid region as a closed polyline.

    Columns at Chebyshev-spaced t (dense near the two vertical sides); in
    each column the zero set of :func:`discriminant` is bracketed on a grid
    and polished with Brent's method. The polyline runs along the lower
    edges left to right and back along the upper edges.
    """
    ts = geom.T * 0.5 * (1 - np.cos(np.pi * (np.arange(resolution) + 0.5) / resolution))
    lower, upper, split = [], [], []
    for t in ts:
        ivs = _liquid_intervals(geom, t, max(resolution // 2, 50))
        if not ivs:
            continue
        if len(ivs) > 1:
            split.append((t, ivs))
        lower.append((t, ivs[0][0]))
        upper.append((t, ivs[-1][1]))
    if len(lower) < 3:
        raise TraceError("no liquid region found", partial=lower + upper[::-1])
    width_first = upper[0][1] - lower[0][1]
    width_last = upper[-1][1] - lower[-1][1]
    size = geom.S + geom.N
    if max(width_first, width_last) > 0.05 * size:
        raise TraceError(
            f"boundary does not close: end widths {width_first:.3g}, {width_last:.3g}", partial=lower + upper[::-1]
        )
    pts = np.array(lower + upper[::-1])
    tangency = {}
    for name, (a, b) in geom.sides().items():
        tangency[name] = min(_segment_distance(p, a, b) for p in pts)
    return BoundaryTrace(pts, tangency, len(lower), split)


def _grad(geom: ScaledGeometry, p, h: float = 1e-6) -> np.ndarray:
    t, x = p
    return np.array(
        [
            (discriminant(geom, t + h, x) - discriminant(geom, t - h, x)) / (2 * h),
            (discriminant(geom, t, x + h) - discriminant(geom, t, x - h)) / (2 * h),
        ]
    )


@dataclass
class Node:
    t: float
    x: float
    vertex: int | None
    branches: list
    """Directions (degrees) at which the zero set leaves the node."""


def _branch_directions(geom: ScaledGeometry, t: float, x: float, radius: float, samples: int = 720) -> list[float]:
    angles = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    signs = []
    for a in angles:
        try:
            signs.append(np.sign(discriminant(geom, t + radius * math.cos(a), x + radius * math.sin(a))))
        except (ValueError, ZeroDivisionError, DegenerateQuadratic):
            signs.append(0.0)
    signs = np.array(signs)
    flips = np.nonzero(signs != np.roll(signs, -1))[0]
    return [float(np.degrees(angles[i])) for i in flips]


def node_at(geom: ScaledGeometry, t: float, x: float, radii=(0.02, 0.01, 0.005)) -> list[float] | None:
    """Branch directions if two branches of the boundary cross at (t, x), else None.

    A crossing shows up as at least four sign changes of the discriminant on
    every small circle around the point.
    """
    size = max(geom.T, geom.S + geom.N)
    found = None
    for r in radii:
        dirs = _branch_directions(geom, t, x, r * size)
        if len(dirs) < 4:
            return None
        found = dirs
    return found


def find_nodes(geom: ScaledGeometry, grid: int = 8, tol: float = 1e-6) -> list[Node]:
    """Self-intersections of the frozen boundary.

    Every vertex of the hexagon is tested with :func:`node_at`. Interior
    candidates are critical points of the discriminant where it vanishes,
    found by root finding on its gradient from a coarse grid of seeds.
    """
    nodes: list[Node] = []
    for i, (t, x) in enumerate(geom.vertices()):
        dirs = node_at(geom, t, x)
        if dirs is not None:
            nodes.append(Node(t, x, i, dirs))
    inset = 0.02 * max(geom.T, geom.S + geom.N)
    for t0 in np.linspace(inset, geom.T - inset, grid):
        lo, hi = geom.section(t0)
        for x0 in np.linspace(lo + inset, hi - inset, grid):
            # the solver may probe far outside the hexagon where powers of q overflow
            try:
                with np.errstate(all="ignore"):
                    sol = optimize.root(lambda p: _grad(geom, p), [t0, x0], method="hybr", options={"xtol": 1e-13})
            except (ValueError, ZeroDivisionError, OverflowError, DegenerateQuadratic):
                continue
            t, x = map(float, sol.x)
            if not sol.success or not np.isfinite(sol.x).all() or not geom.contains(t, x):
                continue
            if any(math.hypot(t - n.t, x - n.x) < inset for n in nodes):
                continue
            try:
                if abs(discriminant(geom, t, x)) > tol:
                    continue
            except (ValueError, ZeroDivisionError, DegenerateQuadratic):
                continue
            dirs = node_at(geom, t, x)
            if dirs is not None:
                nodes.append(Node(t, x, None, dirs))
    return nodes


# ---------------------------------------------------------------------------
# CSV output


def write_boundary_csv(path, trace: BoundaryTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x"])
        for t, x in trace.closed():
            writer.writerow([f"{t:.12g}", f"{x:.12g}"])


def density_grid(geom: ScaledGeometry, nt: int, nx: int):
    """Rows ``(t, x, p1, p2, p3, phi)`` on an interior grid."""
    for t in np.linspace(0, geom.T, nt + 2)[1:-1]:
        lo, hi = geom.section(t)
        for x in np.linspace(lo, hi, nx + 2)[1:-1]:
            s = local_z(geom, t, x)
            phi = math.pi * (1 - s.p1)
            yield float(t), float(x), s.p1, s.p2, s.p3, phi


def write_density_csv(path, geom: ScaledGeometry, nt: int = 50, nx: int = 50) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "p1", "p2", "p3", "phi"])
        for row in density_grid(geom, nt, nx):
            writer.writerow([f"{v:.12g}" for v in row])
