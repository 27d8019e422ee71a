import math

import numpy as np
import pytest

from boxed_pp.weights import (
    Hahn,
    HexagonDims,
    InadmissibleParameters,
    QHahn,
    QRacah,
    QRacahTrig,
    Racah,
    positivity_case,
)

FAMILY_NAMES = ("hahn", "racah", "qhahn", "qracah-imaginary", "qracah-real", "trig")

# one fixed representative per family for cheap parametrized tests
REPRESENTATIVES = [Hahn(), Racah(3.7), QHahn(0.6), QRacah(0.7, -0.5), QRacah(0.6, 0.05), QRacahTrig(0.3, 0.9)]

_ACCEPTANCE_LINES: list[str] = []


def _draw(family: str, dims: HexagonDims, rng: np.random.Generator):
    N, T = dims.N, dims.T
    if family == "hahn":
        return Hahn()
    if family == "racah":
        if rng.random() < 0.5:
            return Racah((T - 1) / 2 + rng.uniform(0.6, 4.0))
        return Racah(-N + 0.5 - rng.uniform(0.6, 4.0))
    if family == "qhahn":
        q = rng.uniform(0.3, 0.95)
        return QHahn(q if rng.random() < 0.5 else 1 / q)
    q = rng.uniform(0.3, 0.95)
    q = q if rng.random() < 0.5 else 1 / q
    if family == "qracah-imaginary":
        return QRacah(q, -rng.uniform(0.05, 3.0))
    if family == "qracah-real":
        e1, e2 = q ** (-N + 0.5), q ** ((T - 1) / 2)
        lo, hi = min(e1, e2), max(e1, e2)
        kappa = lo * rng.uniform(0.1, 0.8) if rng.random() < 0.5 else hi * rng.uniform(1.25, 3.0)
        return QRacah(q, kappa**2)
    if family == "trig":
        alpha = rng.uniform(0.05, 0.5)
        lo, hi = alpha * (T - 1) / 2, math.pi - alpha * (N - 0.5)
        if hi - lo < 0.1:
            alpha = 0.5 * math.pi / (T + N)
            lo, hi = alpha * (T - 1) / 2, math.pi - alpha * (N - 0.5)
        return QRacahTrig(alpha, rng.uniform(lo + 0.02, hi - 0.02))
    raise ValueError(family)


def draw_admissible(family: str, dims: HexagonDims, rng: np.random.Generator, tries: int = 50):
    for _ in range(tries):
        params = _draw(family, dims, rng)
        try:
            positivity_case(params, dims)
        except InadmissibleParameters:
            continue
        return params
    raise RuntimeError(f"no admissible {family} parameters found for {dims}")


@pytest.fixture
def admissible():
    """``admissible(family, dims, rng)`` draws random parameters that pass the positivity rules."""
    return draw_admissible


@pytest.fixture
def report_criterion():
    def record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
        terminalreporter.write_line(line)
