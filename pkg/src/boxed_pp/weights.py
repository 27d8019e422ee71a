"""Hexagon geometry, lozenge weight families and their positivity rules.

Coordinates: a tiling of the a x b x c hexagon is a family of ``N = a``
nonintersecting up-right paths over times ``t = 0..T`` with ``T = b + c``.
Every lattice point of the vertical section at time ``t`` that carries no
path is a *hole* (a horizontal lozenge).  A hole at ``(t, x)`` has lozenge
coordinates ``i = t``, ``j = x - t/2 + 1``; ``j`` is kept doubled so it stays
an integer.

Weight families (all stripped of tiling-independent constants)::

    Hahn         1
    Racah        K + a
    QHahn        q^{-j}
    QRacah       (1 - kappa^2 q^{2a}) q^{-a}      with a = j - (S+1)/2
    QRacahTrig   sin(alpha a + beta)
    Elliptic     theta-function ratio, see :mod:`boxed_pp.elliptic`

The q-Racah weight ``kappa q^a - 1/(kappa q^a)`` equals the expression above
times ``-1/kappa``, which is a constant; the sign of that constant is fixed
so that admissible parameters give positive weights.
"""
from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .numerics import LogSignedValue


class InadmissibleParameters(ValueError):
    """Parameters that do not define a positive measure on the hexagon."""


class DegenerateParameters(ValueError):
    """Parameters sitting on a pole or zero of some weight formula."""


@dataclass(frozen=True)
class HexagonDims:
    a: int
    b: int
    c: int

    def __post_init__(self):
        if self.a < 1 or self.b < 0 or self.c < 0:
            raise ValueError(f"invalid hexagon sides {(self.a, self.b, self.c)}")

    @property
    def N(self) -> int:
        return self.a

    @property
    def T(self) -> int:
        return self.b + self.c

    @property
    def S(self) -> int:
        return self.c

    def with_S(self, S: int) -> "HexagonDims":
        """Same N and T, different S (the chains move S around)."""
        if not 0 <= S <= self.T:
            raise ValueError(f"S={S} outside [0, {self.T}]")
        return HexagonDims(self.a, self.T - S, S)

    def section(self, t: int, S: int | None = None) -> tuple[int, int]:
        """Inclusive bounds of the integer section at time ``t``."""
        return section_bounds(self.N, self.T, self.S if S is None else S, t)

    def section_points(self, t: int, S: int | None = None) -> range:
        lo, hi = self.section(t, S)
        return range(lo, hi + 1)


def section_bounds(N: int, T: int, S: int, t: int) -> tuple[int, int]:
    return max(0, t + S - T), min(t + N - 1, S + N - 1)


@dataclass(frozen=True)
class HoleCoord:
    t: int
    x: int

    @property
    def i(self) -> int:
        return self.t

    @property
    def j2(self) -> int:
        """Twice the lozenge coordinate j."""
        return 2 * self.x - self.t + 2

    @property
    def j(self) -> float:
        return self.j2 / 2


@dataclass(frozen=True)
class Hahn:
    pass


@dataclass(frozen=True)
class Racah:
    K: float


@dataclass(frozen=True)
class QHahn:
    q: float


@dataclass(frozen=True)
class QRacah:
    q: float
    kappa_sq: float


@dataclass(frozen=True)
class QRacahTrig:
    alpha: float
    beta: float


@dataclass(frozen=True)
class Elliptic:
    p: float
    q: float
    u1: complex
    u2: complex


WeightParams = Union[Hahn, Racah, QHahn, QRacah, QRacahTrig, Elliptic]


class PositivityCase(enum.Enum):
    IMAGINARY = "imaginary"
    REAL = "real"
    TRIGONOMETRIC = "trigonometric"
    DEGENERATE_FAMILY = "degenerate-family"
    ELLIPTIC = "elliptic"


def _shift_2a(dims: HexagonDims, t: int, x: int) -> int:
    """Twice ``j - (S+1)/2`` for the hole at (t, x)."""
    return 2 * x - t - dims.S + 1


def raw_hole_weight(params: WeightParams, dims: HexagonDims, t: int, x: int):
    """Signed hole weight before the positive representative is chosen."""
    if isinstance(params, Hahn):
        return 1.0
    a2 = _shift_2a(dims, t, x)
    if isinstance(params, Racah):
        return params.K + a2 / 2
    if isinstance(params, QHahn):
        return params.q ** (-(2 * x - t + 2) / 2)
    if isinstance(params, QRacah):
        q, k2 = params.q, params.kappa_sq
        return (1 - k2 * q**a2) * q ** (-a2 / 2)
    if isinstance(params, QRacahTrig):
        return math.sin(params.alpha * a2 / 2 + params.beta)
    if isinstance(params, Elliptic):
        from .elliptic import EllipticWeightCtx, elliptic_lozenge_weight

        ctx = EllipticWeightCtx(params.p, params.q, params.u1, params.u2)
        val = complex(elliptic_lozenge_weight(ctx, t, HoleCoord(t, x).j2))
        if abs(val.imag) > 1e-12 * max(abs(val), 1e-300):
            raise InadmissibleParameters(f"elliptic weight at (t={t}, x={x}) is not real: {val}")
        return val.real
    raise TypeError(f"unknown weight family {params!r}")


def _check_q(q) -> None:
    if not (q > 0):
        raise InadmissibleParameters(f"q must be positive, got {q}")
    if q == 1:
        raise InadmissibleParameters("q = 1 is not allowed for q-families; use the Hahn or Racah family")


def _rule_check(params: WeightParams, dims: HexagonDims) -> PositivityCase:
    N, T = dims.N, dims.T
    if isinstance(params, Hahn):
        return PositivityCase.DEGENERATE_FAMILY
    if isinstance(params, QHahn):
        _check_q(params.q)
        return PositivityCase.DEGENERATE_FAMILY
    if isinstance(params, Racah):
        if -N + 0.5 <= params.K <= (T - 1) / 2:
            raise InadmissibleParameters(
                f"Racah parameter K={params.K} lies in the forbidden interval [{-N + 0.5}, {(T - 1) / 2}]"
            )
        return PositivityCase.DEGENERATE_FAMILY
    if isinstance(params, QRacah):
        _check_q(params.q)
        k2 = params.kappa_sq
        if k2 < 0:
            return PositivityCase.IMAGINARY
        if k2 == 0:
            return PositivityCase.DEGENERATE_FAMILY
        kappa = math.sqrt(k2)
        e1, e2 = params.q ** (-N + 0.5), params.q ** ((T - 1) / 2)
        lo, hi = min(e1, e2), max(e1, e2)
        if lo <= kappa <= hi:
            raise InadmissibleParameters(
                f"real case: |kappa|={kappa:.6g} lies in the forbidden interval [{lo:.6g}, {hi:.6g}]"
            )
        return PositivityCase.REAL
    if isinstance(params, QRacahTrig):
        ends = (-params.alpha * (T - 1) / 2 + params.beta, params.alpha * (N - 0.5) + params.beta)
        k = math.floor(min(ends) / math.pi)
        if max(ends) > math.pi * (k + 1) + 1e-12:
            raise InadmissibleParameters(
                f"trigonometric case: arguments {ends[0]:.6g} and {ends[1]:.6g} "
                "are not in one interval [pi k, pi (k+1)]"
            )
        return PositivityCase.TRIGONOMETRIC
    if isinstance(params, Elliptic):
        if not 0 <= abs(params.p) < 1:
            raise InadmissibleParameters(f"elliptic nome must satisfy |p| < 1, got {params.p}")
        return PositivityCase.ELLIPTIC
    raise TypeError(f"unknown weight family {params!r}")


def _hole_sites(dims: HexagonDims):
    for t in range(1, dims.T):
        for x in dims.section_points(t):
            yield t, x


def positivity_case(params: WeightParams, dims: HexagonDims) -> PositivityCase:
    """Classify the parameters and reject those giving non-positive weights.

    After the interval rules, every lattice site that can carry a hole is
    swept to confirm the weights are nonzero and share one sign.
    """
    case = _rule_check(params, dims)
    signs = set()
    for t, x in _hole_sites(dims):
        w = raw_hole_weight(params, dims, t, x)
        if w == 0 or not math.isfinite(w):
            raise InadmissibleParameters(f"hole weight vanishes or diverges at (t={t}, x={x})")
        signs.add(w > 0)
    if len(signs) > 1:
        raise InadmissibleParameters("hole weights change sign inside the hexagon")
    return case


def orientation_sign(params: WeightParams, dims: HexagonDims) -> int:
    """Sign that turns the raw weights into positive ones."""
    for t, x in _hole_sites(dims):
        return 1 if raw_hole_weight(params, dims, t, x) > 0 else -1
    return 1


def hole_weight(params: WeightParams, dims: HexagonDims, coord: HoleCoord) -> LogSignedValue:
    """Positive weight of the horizontal lozenge sitting at ``coord``."""
    w = raw_hole_weight(params, dims, coord.t, coord.x)
    if w == 0:
        raise DegenerateParameters(f"weight vanishes at {coord}")
    return LogSignedValue(math.log(abs(w)), 1)


def holes_of_slice(xs, lo: int, hi: int):
    occupied = set(xs)
    return [x for x in range(lo, hi + 1) if x not in occupied]


def _slices(tiling):
    return getattr(tiling, "slices", tiling)


def log_hole_weight_table(params: WeightParams, dims: HexagonDims) -> dict:
    """Map ``(t, x) -> log weight`` over all sites that may carry a hole."""
    return {(t, x): math.log(abs(raw_hole_weight(params, dims, t, x))) for t, x in _hole_sites(dims)}


def tiling_weight(tiling, params: WeightParams, dims: HexagonDims, table: dict | None = None) -> LogSignedValue:
    """Product of hole weights over all horizontal lozenges of a tiling."""
    if table is None:
        table = log_hole_weight_table(params, dims)
    total = 0.0
    for t, xs in enumerate(_slices(tiling)):
        if t == 0 or t == dims.T:
            continue
        lo, hi = dims.section(t)
        for x in holes_of_slice(xs, lo, hi):
            total += table[(t, x)]
    return LogSignedValue(total, 1)


def vertex_heights(tiling, dims: HexagonDims) -> dict:
    """Lozenge height function on lattice vertices.

    Vertex ``(t, y)`` sits between sites ``y-1`` and ``y`` of the section at
    time ``t``; its height counts the holes lying above it on that section.
    """
    heights = {}
    for t, xs in enumerate(_slices(tiling)):
        lo, hi = dims.section(t)
        holes = holes_of_slice(xs, lo, hi)
        for y in range(lo, hi + 2):
            heights[(t, y)] = sum(1 for h in holes if h >= y)
    return heights


def height_ratio_identity(tiling, params: WeightParams, dims: HexagonDims, reference=None) -> float:
    """Compare the direct log-weight with its vertex-height representation.

    Each interior vertex contributes ``h(v) * log(w(j) / w(j - 1))`` where
    ``j`` belongs to the hole just above ``v``.  Both sides
    are shifted by their values on ``reference`` (default: the tiling itself
    gives zero), which removes the tiling-independent constant.
    """
    if not isinstance(params, (QRacah, QHahn)):
        raise TypeError("height representation is implemented for q-Hahn and q-Racah weights")

    def height_side(til):
        total = 0.0
        heights = vertex_heights(til, dims)
        for t in range(1, dims.T):
            lo, hi = dims.section(t)
            logs = {x: math.log(abs(raw_hole_weight(params, dims, t, x))) for x in range(lo, hi + 1)}
            for y in range(lo + 1, hi + 1):
                total += heights[(t, y)] * (logs[y] - logs[y - 1])
        return total

    def direct_side(til):
        return tiling_weight(til, params, dims).log_abs

    ref = tiling if reference is None else reference
    return (direct_side(tiling) - direct_side(ref)) - (height_side(tiling) - height_side(ref))


def trig_as_complex_q(params: QRacahTrig) -> tuple[complex, complex]:
    """``(q, kappa^2)`` on the unit circle reproducing the sine weight."""
    return cmath.exp(1j * params.alpha), cmath.exp(2j * params.beta)


class QFactors:
    """Uniform access to the building blocks of every closed formula.

    The q-formulas are products of ``(1 - q^m)``, ``(1 - kappa^2 q^m)`` and
    powers ``q^m``.  At ``q = 1`` (Hahn and Racah) each vanishing factor is
    replaced by its leading coefficient, which is consistent because every
    formula we use has the same number of such factors in each term:

    ==========  ===============  =====================  =========  ==================
    family      ``1 - q^m``      ``1 - kappa^2 q^m``    ``q^m``    lattice ``mu``
    ==========  ===============  =====================  =========  ==================
    QRacah      1 - q^m          1 - k2 q^m             q^m        q^-x + k2 q^(x-S-t+1)
    QHahn       1 - q^m          1                      q^m        q^-x
    Trig        complex q        complex kappa^2        complex    complex
    Racah       m                2K + m                 1          x (x + 2K - S - t + 1)
    Hahn        m                1                      1          x
    ==========  ===============  =====================  =========  ==================
    """

    def __init__(self, params: WeightParams):
        self.params = params
        self.classical = isinstance(params, (Hahn, Racah))
        self.is_complex = isinstance(params, QRacahTrig)
        if isinstance(params, QRacah):
            self.q, self.k2 = params.q, params.kappa_sq
        elif isinstance(params, QHahn):
            self.q, self.k2 = params.q, 0.0
        elif isinstance(params, QRacahTrig):
            self.q, self.k2 = trig_as_complex_q(params)
        elif isinstance(params, Racah):
            self.q, self.k2 = 1.0, None
            self.K = params.K
        elif isinstance(params, Hahn):
            self.q, self.k2 = 1.0, None
        else:
            raise TypeError(f"closed formulas are not available for {params!r}")
        self.dtype = complex if self.is_complex else float

    def qf(self, m):
        """``1 - q^m``."""
        m = np.asarray(m, dtype=float)
        if self.classical:
            return m.astype(self.dtype)
        return 1 - np.power(self.q, m)

    def kf(self, m):
        """``1 - kappa^2 q^m``."""
        m = np.asarray(m, dtype=float)
        if isinstance(self.params, Racah):
            return 2 * self.K + m
        if self.k2 is None or (not self.is_complex and self.k2 == 0):
            return np.ones_like(m, dtype=self.dtype)
        return 1 - self.k2 * np.power(self.q, m)

    def qp(self, m):
        """``q^m``."""
        m = np.asarray(m, dtype=float)
        if self.classical:
            return np.ones_like(m, dtype=self.dtype)
        return np.power(self.q, m).astype(self.dtype)

    def mu(self, x, t: int, S: int):
        """Lattice function whose Vandermonde enters every slice law."""
        x = np.asarray(x, dtype=float)
        if isinstance(self.params, Racah):
            return x * (x + 2 * self.K - S - t + 1)
        if isinstance(self.params, Hahn):
            return x
        return np.power(self.q, -x) + self.k2 * np.power(self.q, x - S - t + 1)

    def log_qpoch(self, a_exp, n, base: int = 1):
        """Log of ``(q^a; q^base)_n`` with ``a_exp`` an integer exponent array."""
        a_exp = np.atleast_1d(np.asarray(a_exp))
        n = np.broadcast_to(np.asarray(n), a_exp.shape)
        out = np.zeros(a_exp.shape, dtype=complex)
        for idx in np.ndindex(a_exp.shape):
            k = int(n[idx])
            if k:
                out[idx] = np.log(self.qf(a_exp[idx] + base * np.arange(k)).astype(complex)).sum()
        return out

    def log_kpoch(self, a_exp, n, base: int = 1):
        """Log of ``(kappa^2 q^a; q^base)_n``."""
        a_exp = np.atleast_1d(np.asarray(a_exp))
        n = np.broadcast_to(np.asarray(n), a_exp.shape)
        out = np.zeros(a_exp.shape, dtype=complex)
        for idx in np.ndindex(a_exp.shape):
            k = int(n[idx])
            if k:
                out[idx] = np.log(self.kf(a_exp[idx] + base * np.arange(k)).astype(complex)).sum()
        return out


def as_factors(params) -> QFactors:
    """Accept either weight parameters or an already built :class:`QFactors`."""
    return params if isinstance(params, QFactors) else QFactors(params)
