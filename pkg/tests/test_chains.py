import numpy as np
import pytest
from conftest import REPRESENTATIVES

from boxed_pp.chains import (
    KINDS,
    _target,
    commutation_check,
    det_row_from_u,
    mu,
    slice_measure,
    step_factors,
    transition_matrix,
    transition_row,
    u_matrix,
)
from boxed_pp.oracle import slice_marginals, slice_states
from boxed_pp.weights import Hahn, HexagonDims, QHahn, QRacah, Racah


def test_mu_examples():
    q, k2 = 0.7, -0.5
    for t, S, x in [(0, 0, 0), (2, 1, 3), (1, 3, 2)]:
        assert mu(t, S, x, QRacah(q, k2)) == pytest.approx(q**-x + k2 * q ** (x - S - t + 1))
        assert mu(t, S, x, QHahn(q)) == pytest.approx(q**-x)


@pytest.mark.parametrize("params", REPRESENTATIVES, ids=repr)
def test_slice_law_matches_enumeration(params):
    d = HexagonDims(2, 2, 3)
    marg = slice_marginals(d, params)
    for t in range(d.T + 1):
        law = slice_measure(t, d, params).probs
        assert set(law) >= set(marg[t])
        assert max(abs(law[k] - marg[t].get(k, 0.0)) for k in law) < 1e-12


@pytest.mark.parametrize("params", [QRacah(0.7, -0.5), Racah(3.7), QHahn(0.6)], ids=repr)
def test_slice_law_symmetric_in_s_and_t(params):
    d = HexagonDims(2, 3, 3)
    for S, t in [(1, 2), (0, 3), (3, 4)]:
        a = slice_measure(t, d, params, S=S).probs
        b = slice_measure(S, d, params, S=t).probs
        assert a.keys() == b.keys()
        assert max(abs(a[k] - b[k]) for k in a) < 1e-13


@pytest.mark.parametrize("params", REPRESENTATIVES, ids=repr)
def test_rows_are_stochastic_and_preserve_measure(params):
    d = HexagonDims(2, 2, 2)
    for kind in KINDS:
        for S in range(d.T + 1):
            for t in range(d.T + 1):
                S2, t2 = _target(kind, S, t)
                if not (0 <= S2 <= d.T and 0 <= t2 <= d.T):
                    continue
                rows, cols, M = transition_matrix(kind, t, S, d, params)
                assert np.allclose(M.sum(axis=1), 1.0, atol=1e-13)
                assert M.min() >= 0
                pushed = slice_measure(t, d, params, S=S).vector(rows) @ M
                target = slice_measure(t2, d, params, S=S2).vector(cols)
                assert np.abs(pushed - target).sum() < 1e-12


def test_last_step_is_forced():
    d, params = HexagonDims(2, 2, 2), QRacah(0.7, -0.5)
    for X in slice_states(d.N, d.T, d.S, d.T - 1):
        row = transition_row("t+", X, d, params, t=d.T - 1)
        assert len(row.targets) == 1 and row.targets[0][1] == pytest.approx(1.0)


def test_u_matrix_has_two_diagonals():
    d, params = HexagonDims(2, 2, 3), QRacah(0.7, -0.5)
    for kind in KINDS:
        S, t = 2, 2
        U = u_matrix(kind, d, params, t, S)
        step = 1 if kind in ("t+", "S+") else -1
        rows, cols = U.values.shape
        for i in range(rows):
            for j in range(cols):
                x, y = U.row_lo + i, U.col_lo + j
                if y - x not in (0, step):
                    assert U.values[i, j] == 0


@pytest.mark.parametrize("params", REPRESENTATIVES, ids=repr)
def test_determinant_rows_match_direct_rows(params):
    d = HexagonDims(2, 2, 3)
    S, t = 2, 2
    for kind in KINDS:
        for X in slice_states(d.N, d.T, S, t):
            direct = transition_row(kind, X, d, params, S=S, t=t).as_dict()
            via_det = det_row_from_u(kind, X, d, params, S, t)
            for ys, p in direct.items():
                assert via_det.get(ys, 0.0) == pytest.approx(p, abs=1e-12)


def test_step_factors_reject_unknown_kind():
    with pytest.raises(ValueError):
        step_factors("x+", np.arange(3), 1, 1, 2, 4, QHahn(0.6))


def test_row_outside_family_rejected():
    d = HexagonDims(1, 1, 1)
    with pytest.raises(ValueError):
        transition_row("t+", (1,), d, Hahn(), t=d.T)


@pytest.mark.parametrize("params", REPRESENTATIVES, ids=repr)
def test_commutation_small(params):
    d = HexagonDims(2, 2, 2)
    worst = max(commutation_check(d, params, t, S) for S in range(d.T + 1) for t in range(d.T + 1))
    assert worst < 1e-11
