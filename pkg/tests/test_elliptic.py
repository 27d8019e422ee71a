import itertools

import numpy as np
import pytest

from boxed_pp.elliptic import (
    EllipticWeightCtx,
    Trapezoid,
    addition_law_residual,
    elliptic_lozenge_weight,
    inverse_identity_residual,
    kasteleyn_determinant,
    kasteleyn_inverse_W,
    lozenge_weight_ratio,
    macmahon_check,
    matching_weight_sum,
    numeric_inverse,
    parallelogram,
    partition_term_residual,
    qracah_limit_residual,
    region_for,
    report_table,
    trapezoid_pairs,
    trapezoid_weight_sum,
)

CTX = EllipticWeightCtx(0.2, 0.6, complex(0.8, 0.3), complex(1.3, -0.4))


def test_ctx_validation():
    with pytest.raises(ValueError):
        EllipticWeightCtx(1.0, 0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        EllipticWeightCtx(0.1, 0.5, 0.0, 1.0)
    assert CTX.u1 * CTX.u2 * CTX.u3 == pytest.approx(1.0)


def test_ratio_recurrence_matches_weights():
    for i in range(3):
        for j2 in range(-4, 6, 2):
            j2 += i % 2
            ratio = elliptic_lozenge_weight(CTX, i, j2 + 2) / elliptic_lozenge_weight(CTX, i, j2)
            assert lozenge_weight_ratio(CTX, i, j2) == pytest.approx(ratio, rel=1e-12)


def test_weight_at_zero_nome_is_rational():
    ctx = EllipticWeightCtx(0.0, 0.6, 0.7, 1.2)
    i, j2 = 1, 3
    j, q, u1, u2 = j2 / 2, 0.6, 0.7, 1.2
    expected = np.sqrt(u1 * u2) * q ** (j - 0.5) * (1 - q ** (2 * j - 1) * u1 * u2) / (
        (1 - q ** (j - 1.5 * i - 1) * u1) * (1 - q ** (j - 1.5 * i) * u1)
        * (1 - q ** (j + 1.5 * i - 1) * u2) * (1 - q ** (j + 1.5 * i) * u2))
    assert elliptic_lozenge_weight(ctx, i, j2) == pytest.approx(expected, rel=1e-13)


def test_small_nome_limit_is_qracah():
    coarse = qracah_limit_residual(0.6, 1.7, p=1e-8)
    fine = qracah_limit_residual(0.6, 1.7, p=1e-12)
    assert fine < 1e-4
    # deviation shrinks like sqrt(p)
    assert coarse / fine == pytest.approx(100, rel=0.05)


@pytest.mark.parametrize("shift", [0, 1, 2])
def test_identity_survives_nome_shift(shift):
    assert macmahon_check(CTX.shifted(shift), 2, 2, 2).rel_err < 1e-10


@pytest.mark.parametrize("a,b,c", [(1, 1, 1), (2, 2, 2), (1, 2, 3), (3, 2, 1)])
def test_macmahon_identities(a, b, c):
    assert macmahon_check(CTX, a, b, c).rel_err < 1e-10
    assert macmahon_check((0.7, 3.0), a, b, c).rel_err < 1e-12
    assert partition_term_residual(CTX, a, b, c) < 1e-10


def test_inverse_vanishes_outside_cone():
    assert kasteleyn_inverse_W(CTX, (1, 1), (1, 1)) == 0
    assert kasteleyn_inverse_W(CTX, (2, 0), (1, 1)) == 0
    assert kasteleyn_inverse_W(CTX, (0, 0), (1, 3)) == 0
    assert kasteleyn_inverse_W(CTX, (0, 0), (1, -1)) != 0
    with pytest.raises(ValueError):
        kasteleyn_inverse_W(CTX, (0, 1), (1, 1))


def test_inverse_identity_and_numeric_inverse():
    assert inverse_identity_residual(CTX, parallelogram(0, 3, 0, 3)) < 1e-9
    small = numeric_inverse(CTX, 0, 3, 0, 3)
    large = numeric_inverse(CTX, -1, 3, 0, 4)
    scale = max(abs(v) for v in small.values())
    assert max(abs(small[k] - large[k]) for k in small) < 1e-9 * scale
    assert max(abs(v - kasteleyn_inverse_W(CTX, *k)) for k, v in small.items()) < 1e-9 * scale


def test_addition_law():
    for first, second in [((0, 2), (1, -1)), ((0, 4), (2, 0)), ((1, 3), (3, -1))]:
        assert addition_law_residual(CTX, first, second) < 1e-12
    with pytest.raises(ValueError):
        addition_law_residual(CTX, (1, 1), (0, 0))


TRAPEZOIDS = [
    ("right", Trapezoid(0, 0, 1, 1, a=3, b=2), range(0, 4)),
    ("right", Trapezoid(0, 0, 0, 2, a=4, b=2), range(0, 5)),
    ("left", Trapezoid(1, -1, 2, 2), range(0, 5)),
]


@pytest.mark.parametrize("side,geo,xs", TRAPEZOIDS, ids=lambda v: getattr(v, "side", str(v)))
def test_trapezoid_routes_agree(side, geo, xs):
    rows = []
    for holes in itertools.combinations(xs, geo.c):
        holes = list(holes)
        src, snk = trapezoid_pairs(side, geo, holes)
        closed = trapezoid_weight_sum(CTX, side, geo, holes)
        det = kasteleyn_determinant(CTX, side, geo, holes)
        brute, count = matching_weight_sum(CTX, region_for(src, snk), src, snk)
        rows.append((closed, det, brute * (-1) ** sum(holes), count))
    ref = next(r for r in rows if r[3] > 0)
    for closed, det, brute, _ in rows:
        assert closed / ref[0] == pytest.approx(det / ref[1], rel=1e-9, abs=1e-12)
        assert brute / ref[2] == pytest.approx(det / ref[1], rel=1e-9, abs=1e-12)


def test_report_table_lists_every_check():
    checks = [macmahon_check(CTX, 1, 1, 1), macmahon_check((0.7, 3.0), 2, 1, 1)]
    table = report_table(checks).splitlines()
    assert len(table) == 3
    assert table[1].startswith("elliptic") and table[2].startswith("zeta")
