import itertools

import numpy as np
import pytest

from boxed_pp.oracle import (
    CAP_ENV,
    Tiling,
    TooLarge,
    check_tiling,
    count_tilings,
    enumerate_plane_partitions,
    enumerate_tilings,
    exact_distribution,
    has_lozenge,
    lozenge_probability,
    macmahon_count,
    partial_weight_sums,
    plane_partition_to_tiling,
    point_correlations,
    slice_marginals,
    tiling_to_plane_partition,
)
from boxed_pp.weights import Hahn, HexagonDims, QHahn, QRacah


@pytest.mark.parametrize("a,b,c", [(1, 1, 1), (2, 2, 2), (2, 3, 1), (3, 2, 2), (1, 4, 3), (2, 0, 3), (3, 3, 3)])
def test_enumeration_matches_product_formula(a, b, c):
    d = HexagonDims(a, b, c)
    tilings = list(enumerate_tilings(d))
    assert len(tilings) == len(set(tilings)) == count_tilings(d) == macmahon_count(a, b, c)
    for til in tilings:
        check_tiling(til.slices, d)


def test_macmahon_known_values():
    assert [macmahon_count(n, n, n) for n in range(1, 5)] == [2, 20, 980, 232848]


def test_plane_partition_bijection():
    d = HexagonDims(2, 3, 2)
    pps = list(enumerate_plane_partitions(2, 3, 2))
    tilings = {plane_partition_to_tiling(pp, d) for pp in pps}
    assert tilings == set(enumerate_tilings(d))
    for pp in pps:
        assert np.array_equal(tiling_to_plane_partition(plane_partition_to_tiling(pp, d), d), pp)


def test_one_by_one_probabilities():
    d = HexagonDims(1, 1, 1)
    assert sorted(exact_distribution(d, Hahn()).values()) == pytest.approx([0.5, 0.5])
    assert sorted(exact_distribution(d, QHahn(0.5)).values()) == pytest.approx([1 / 3, 2 / 3])


def test_distribution_sums_to_one():
    d = HexagonDims(2, 2, 3)
    for params in (QHahn(1.4), QRacah(0.7, -0.5)):
        dist = exact_distribution(d, params)
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-14)
        assert min(dist.values()) > 0


def test_line_format_round_trip():
    for til in enumerate_tilings(HexagonDims(2, 2, 2)):
        text = til.to_lines()
        assert text.endswith("\n") and text.count("\n") == 5
        assert Tiling.from_lines(text) == til


def test_check_tiling_rejects_bad_input():
    d = HexagonDims(1, 1, 1)
    with pytest.raises(ValueError):
        check_tiling(((0,), (2,), (1,)), d)
    with pytest.raises(ValueError):
        check_tiling(((0,), (1,)), d)
    with pytest.raises(ValueError):
        check_tiling(((0,), (0,), (0,)), d)


def test_cap_raises_too_large(monkeypatch):
    d = HexagonDims(3, 3, 3)
    with pytest.raises(TooLarge):
        next(enumerate_tilings(d, cap=100))
    monkeypatch.setenv(CAP_ENV, "10")
    with pytest.raises(TooLarge):
        next(enumerate_tilings(d))


def test_marginals_agree_with_point_correlations():
    d, params = HexagonDims(2, 2, 2), QRacah(0.7, -0.5)
    marg = slice_marginals(d, params)
    for t in range(d.T + 1):
        assert sum(marg[t].values()) == pytest.approx(1.0)
        lo, hi = d.section(t)
        for x in range(lo, hi + 1):
            direct = sum(p for xs, p in marg[t].items() if x in xs)
            assert point_correlations(d, params, [(t, x)]) == pytest.approx(direct, abs=1e-14)


def test_hole_and_path_lozenges_partition_each_point():
    d, params = HexagonDims(2, 2, 2), QHahn(0.6)
    t = 2
    lo, hi = d.section(t)
    for x in range(lo, hi + 1):
        hole = lozenge_probability(d, params, [((t, x), (t, x))])
        flat = lozenge_probability(d, params, [((t, x), (t + 1, x))])
        up = lozenge_probability(d, params, [((t, x), (t + 1, x + 1))])
        assert hole + flat + up == pytest.approx(1.0, abs=1e-14)


def test_has_lozenge_on_single_tiling():
    til = Tiling(((0,), (0,), (1,)))
    assert has_lozenge(til, (0, 0), (1, 0))
    assert has_lozenge(til, (1, 0), (2, 1))
    assert has_lozenge(til, (1, 1), (1, 1))
    assert not has_lozenge(til, (1, 0), (1, 0))


@pytest.mark.parametrize("params", [QHahn(0.6), QRacah(0.7, -0.5), QRacah(1.3, 0.02)], ids=repr)
def test_partial_weight_sums_reproduce_marginals(params):
    d = HexagonDims(2, 3, 2)
    marg = slice_marginals(d, params)
    for t in range(1, d.T):
        ratios = []
        for xs, p in marg[t].items():
            left, centre, right = partial_weight_sums(d, params, t, xs)
            ratios.append(p / (left * centre * right).value())
        assert max(ratios) / min(ratios) - 1 < 1e-12


def test_partial_weight_sums_reject_classical():
    with pytest.raises(TypeError):
        partial_weight_sums(HexagonDims(1, 1, 1), Hahn(), 1, (0,))
