import cmath
import math

import numpy as np
import pytest

from boxed_pp.asymptotics import (
    ScaledGeometry,
    bulk_correlation,
    bulk_kernel,
    closed_form_z,
    discriminant,
    frozen_boundary,
    local_slope,
    local_z,
    phi_and_c,
    q_polynomial,
    slope_from_z,
)
from boxed_pp.weights import Hahn, HexagonDims, QHahn, QRacah, QRacahTrig, Racah

LIQUID_SETTINGS = [
    ScaledGeometry(1, 2, 1, 0.5, 0.0),
    ScaledGeometry(1, 2.5, 1.2, 0.6, 0.2),
    ScaledGeometry(1, 2, 1, 2.0, -0.4),
    ScaledGeometry(0.8, 2.0, 1.3, 0.3, -0.1),
]


def test_slope_from_z_cases():
    assert slope_from_z(cmath.exp(1j * math.pi / 3)) == pytest.approx((1 / 3, 1 / 3, 1 / 3))
    assert slope_from_z(-2.0) == (1.0, 0.0, 0.0)
    assert slope_from_z(3.0) == (0.0, 1.0, 0.0)
    assert slope_from_z(0.5) == (0.0, 0.0, 1.0)
    p = slope_from_z(0.2 + 0.7j)
    assert sum(p) == pytest.approx(1.0) and min(p) > 0


def test_q_polynomial_q_hahn_coefficients():
    g = ScaledGeometry(1, 2, 1, 0.5, 0.0)
    poly = q_polynomial(g)
    q = 0.5
    assert complex(poly.u) == pytest.approx(-(1 + q**2))
    assert complex(poly.const) == pytest.approx(q**2)
    assert complex(poly.vv) == pytest.approx(q**0)
    assert complex(poly.uv) == pytest.approx(q**1 + q**-1)


@pytest.mark.parametrize("geom", LIQUID_SETTINGS, ids=str)
def test_closed_form_is_conjugate_root(geom):
    checked = 0
    for t in np.linspace(0.1, geom.T - 0.1, 9):
        lo, hi = geom.section(t)
        for x in np.linspace(lo + 0.05, hi - 0.05, 9):
            s = local_slope(geom, t, x)
            if s.frozen:
                continue
            checked += 1
            assert abs(-s.c * cmath.exp(-1j * s.phi) - s.z) < 1e-9
            assert abs(closed_form_z(geom, t, x) - s.z.conjugate()) < 1e-9
            # the arccos angle is the path density, so holes fill the rest
            assert s.p1 == pytest.approx(1 - s.phi / math.pi, abs=1e-9)
    assert checked > 10


def test_symmetric_hexagon_centre_is_balanced():
    g = ScaledGeometry.from_hexagon(HexagonDims(10, 10, 10), Hahn(), 10)
    s = local_z(g, 1.0, 1.0)
    assert not s.frozen
    assert (s.p1, s.p2, s.p3) == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-3)


def test_corners_are_frozen():
    g = ScaledGeometry(1, 2, 1, 0.5, 0.0)
    assert discriminant(g, 0.02, 0.01) > 0
    assert local_z(g, 0.02, 0.01).frozen
    assert discriminant(g, 1.0, 1.0) < 0


def test_phi_clamps_in_frozen_region():
    g = ScaledGeometry(1, 2, 1, 0.5, 0.0)
    assert phi_and_c(g, 0.02, 0.01).phi in (0.0, math.pi)


def test_bulk_kernel_equal_time():
    s = local_slope(ScaledGeometry(1, 2, 1, 0.5, 0.0), 1.0, 1.0)
    assert bulk_kernel(0, 0, s) == pytest.approx(s.phi / math.pi)
    for dx in (1, -2, 3):
        assert bulk_kernel(dx, 0, s) == pytest.approx(math.sin(s.phi * dx) / (math.pi * dx))
    assert bulk_correlation([(0, 0)], s) == pytest.approx(s.phi / math.pi)
    two = bulk_correlation([(0, 0), (1, 0)], s)
    assert 0 <= two <= s.phi / math.pi


def test_bulk_kernel_time_steps_real():
    s = local_slope(ScaledGeometry(1, 2.5, 1.2, 0.6, 0.2), 1.2, 1.0)
    for dx, dt in [(0, 1), (1, 1), (0, -1), (-1, 2)]:
        assert math.isfinite(bulk_kernel(dx, dt, s))


def test_admissibility_of_geometry():
    with pytest.raises(ValueError):
        ScaledGeometry(0, 2, 1, 0.5)
    with pytest.raises(ValueError):
        ScaledGeometry(1, 2, 1, 1.0)
    with pytest.raises(ValueError, match="sign"):
        ScaledGeometry(1, 2, 1, 0.5, 0.5)


def test_from_hexagon_maps():
    d = HexagonDims(20, 20, 20)
    g = ScaledGeometry.from_hexagon(d, QRacah(0.99, -0.5), 20)
    assert (g.S, g.T, g.N) == (1.0, 2.0, 1.0)
    assert g.q == pytest.approx(0.99**20) and g.kappa_sq == -0.5
    assert ScaledGeometry.from_hexagon(d, QHahn(0.97), 20).kappa_sq == 0
    trig = ScaledGeometry.from_hexagon(d, QRacahTrig(0.03, 1.0), 20)
    assert abs(trig.q) == pytest.approx(1.0) and trig.kappa_sq == pytest.approx(cmath.exp(2j))
    rac = ScaledGeometry.from_hexagon(d, Racah(30.0), 20)
    assert rac.q < 1 and rac.kappa_sq == pytest.approx(rac.q ** 3.0)


def test_q_hahn_boundary_is_closed_and_inscribed():
    trace = frozen_boundary(ScaledGeometry(1, 2, 1, 0.5, 0.0), resolution=120)
    pts = trace.closed()
    assert np.allclose(pts[0], pts[-1])
    assert max(trace.tangency.values()) < 1e-2
    assert not trace.split_columns
