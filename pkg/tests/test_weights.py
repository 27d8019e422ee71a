import math

import numpy as np
import pytest
from conftest import REPRESENTATIVES

from boxed_pp.oracle import enumerate_tilings, plane_partition_to_tiling
from boxed_pp.weights import (
    DegenerateParameters,
    Hahn,
    HexagonDims,
    HoleCoord,
    InadmissibleParameters,
    PositivityCase,
    QHahn,
    QRacah,
    QRacahTrig,
    Racah,
    hole_weight,
    height_ratio_identity,
    positivity_case,
    raw_hole_weight,
    tiling_weight,
)


def test_dims_derived_quantities():
    d = HexagonDims(2, 3, 4)
    assert (d.N, d.T, d.S) == (2, 7, 4)
    assert d.with_S(1) == HexagonDims(2, 6, 1)
    for t in range(d.T + 1):
        lo, hi = d.section(t)
        assert lo == max(0, t + d.S - d.T) and hi == min(t + d.N - 1, d.S + d.N - 1)
        assert lo <= hi


def test_invalid_dims_rejected():
    with pytest.raises(ValueError):
        HexagonDims(0, 2, 2)
    with pytest.raises(ValueError):
        HexagonDims(2, 2, 2).with_S(5)


def test_hole_coord_half_integers():
    for t in range(5):
        for x in range(5):
            c = HoleCoord(t, x)
            assert c.i == t
            assert c.j - 1 + t / 2 == x


def test_hahn_weight_is_one():
    d = HexagonDims(2, 2, 2)
    assert hole_weight(Hahn(), d, HoleCoord(1, 1)).value() == 1


def test_qhahn_weight_is_power_of_q():
    d, q = HexagonDims(2, 2, 2), 0.6
    for t, x in [(1, 0), (2, 1), (3, 3)]:
        j = HoleCoord(t, x).j
        assert hole_weight(QHahn(q), d, HoleCoord(t, x)).value() == pytest.approx(q**-j)


def test_racah_weight_is_linear():
    d, K = HexagonDims(2, 2, 2), 3.7
    for t, x in [(1, 0), (2, 1), (3, 3)]:
        j = HoleCoord(t, x).j
        assert hole_weight(Racah(K), d, HoleCoord(t, x)).value() == pytest.approx(K + j - (d.S + 1) / 2)


def test_positivity_cases():
    d = HexagonDims(2, 2, 2)
    assert positivity_case(QRacah(0.9, -1.0), d) is PositivityCase.IMAGINARY
    assert positivity_case(QRacahTrig(0.3, 0.9), d) is PositivityCase.TRIGONOMETRIC
    q = 0.9
    with pytest.raises(InadmissibleParameters, match="forbidden interval"):
        positivity_case(QRacah(q, q ** (d.T - 1)), d)
    with pytest.raises(InadmissibleParameters, match="forbidden interval"):
        positivity_case(Racah(0.0), d)
    with pytest.raises(InadmissibleParameters):
        positivity_case(QHahn(1.0), d)
    with pytest.raises(InadmissibleParameters, match="interval"):
        positivity_case(QRacahTrig(1.0, 0.1), d)


@pytest.mark.parametrize("params", REPRESENTATIVES, ids=repr)
def test_admissible_weights_are_positive(params):
    d = HexagonDims(3, 2, 3)
    positivity_case(params, d)
    for t in range(1, d.T):
        for x in d.section_points(t):
            assert hole_weight(params, d, HoleCoord(t, x)).sign == 1


def test_zero_weight_is_degenerate():
    # K = -3/2 makes the linear weight vanish at 2x - t - S + 1 = 3
    d = HexagonDims(2, 2, 2)
    with pytest.raises(DegenerateParameters):
        hole_weight(Racah(-1.5), d, HoleCoord(2, 3))
    with pytest.raises(InadmissibleParameters):
        positivity_case(Racah(-1.5), d)


def test_tiling_weight_hahn_is_one():
    d = HexagonDims(2, 2, 2)
    for til in enumerate_tilings(d):
        assert tiling_weight(til, Hahn(), d).value() == pytest.approx(1.0)


def test_qhahn_weight_tracks_volume():
    q = 0.6
    d = HexagonDims(2, 2, 2)
    empty = tiling_weight(plane_partition_to_tiling(np.zeros((2, 2), int), d), QHahn(q), d).log_abs
    for pp in [[[1, 0], [0, 0]], [[2, 1], [1, 0]], [[2, 2], [2, 2]]]:
        pp = np.array(pp)
        w = tiling_weight(plane_partition_to_tiling(pp, d), QHahn(q), d).log_abs
        assert w - empty == pytest.approx(-pp.sum() * math.log(q) * _volume_sign(d, q), abs=1e-12)


def _volume_sign(d, q):
    # orientation of the volume in the lozenge picture: one cube changes log weight by -log q or +log q
    one = tiling_weight(plane_partition_to_tiling(np.array([[1, 0], [0, 0]]), d), QHahn(q), d).log_abs
    zero = tiling_weight(plane_partition_to_tiling(np.zeros((2, 2), int), d), QHahn(q), d).log_abs
    return round((one - zero) / -math.log(q))


def test_one_by_one_ratio_is_inverse_q():
    q = 0.6
    d = HexagonDims(1, 1, 1)
    ws = sorted(tiling_weight(t, QHahn(q), d).value() for t in enumerate_tilings(d))
    assert ws[1] / ws[0] == pytest.approx(1 / q)


def test_flat_hexagon_has_one_positive_weight():
    d = HexagonDims(3, 2, 0)
    tilings = list(enumerate_tilings(d))
    assert len(tilings) == 1
    w = tiling_weight(tilings[0], QRacah(0.7, -0.5), d)
    assert w.sign == 1 and math.isfinite(w.log_abs)


@pytest.mark.parametrize("dims,params,tol", [
    ((1, 1, 1), QHahn(0.6), 1e-12),
    ((2, 2, 2), QRacah(0.8, -1.0), 1e-10),
    ((2, 3, 2), QRacah(0.6, 0.05), 1e-10),
])
def test_height_representation(dims, params, tol):
    d = HexagonDims(*dims)
    tilings = list(enumerate_tilings(d))
    ref = tilings[0]
    assert height_ratio_identity(ref, params, d) == 0
    for til in tilings:
        assert abs(height_ratio_identity(til, params, d, reference=ref)) < tol


def test_small_kappa_approaches_qhahn():
    d, q = HexagonDims(2, 2, 2), 0.7
    for (t, x), (t2, x2) in [((1, 0), (1, 1)), ((2, 0), (3, 3))]:
        j, j2 = HoleCoord(t, x).j, HoleCoord(t2, x2).j
        ratio = raw_hole_weight(QRacah(q, 1e-12), d, t, x) / raw_hole_weight(QRacah(q, 1e-12), d, t2, x2)
        assert ratio == pytest.approx(q ** (j2 - j), rel=1e-8)


def test_racah_is_classical_limit_of_qracah():
    d, K = HexagonDims(2, 2, 2), 3.7
    sites = [(1, 0), (2, 1), (3, 3)]
    for q in (1 - 1e-4, 1 + 1e-4):
        qr = QRacah(q, q ** (2 * K))
        base = raw_hole_weight(qr, d, 1, 1) / raw_hole_weight(Racah(K), d, 1, 1)
        for t, x in sites:
            ratio = raw_hole_weight(qr, d, t, x) / raw_hole_weight(Racah(K), d, t, x)
            assert ratio / base == pytest.approx(1.0, rel=1e-3)
