import json

import pytest
from click.testing import CliRunner

from boxed_pp.cli import lozenge_polygons, main
from boxed_pp.oracle import Tiling, check_tiling, enumerate_tilings
from boxed_pp.weights import HexagonDims


@pytest.fixture
def runner():
    return CliRunner()


@pytest.mark.parametrize("args", [
    ["--family", "hahn"],
    ["--family", "racah", "--K", "3.5"],
    ["--family", "qhahn", "--q", "1.7"],
    ["--family", "qracah", "--q", "0.8", "--kappa-sq", "-1"],
    ["--family", "trig"],
    ["--family", "elliptic"],
])
def test_verify_passes(runner, args):
    res = runner.invoke(main, ["verify", *args])
    assert res.exit_code == 0, res.output
    assert "FAIL" not in res.output


def test_forbidden_kappa_rejected(runner):
    res = runner.invoke(main, ["sample", "--family", "qracah", "--q", "0.97", "--kappa-sq", "1"])
    assert res.exit_code != 0
    assert "rejected parameters" in res.output


def test_sample_is_deterministic(runner, tmp_path):
    args = ["sample", "--a", "3", "--b", "4", "--c", "3", "--samples", "3", "--seed", "5"]
    first = runner.invoke(main, args + ["--out", str(tmp_path / "x.txt")])
    second = runner.invoke(main, args + ["--out", str(tmp_path / "y.txt")])
    assert first.exit_code == second.exit_code == 0
    text = (tmp_path / "x.txt").read_text()
    assert text == (tmp_path / "y.txt").read_text()
    blocks = [b for b in text.split("\n\n") if b.strip()]
    assert len(blocks) == 3
    for b in blocks:
        check_tiling(Tiling.from_lines(b).slices, HexagonDims(3, 4, 3))


def test_sample_trace_and_svg(runner, tmp_path):
    res = runner.invoke(main, ["sample", "--trace", str(tmp_path / "t.txt"), "--svg", str(tmp_path / "s.svg")])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "t.txt").read_text().splitlines()
    assert lines[0] == "S t k l xi" and len(lines) > 1
    assert (tmp_path / "s.svg").read_text().startswith("<svg")


def test_render_round_trip(runner, tmp_path):
    src = tmp_path / "x.txt"
    runner.invoke(main, ["sample", "--a", "3", "--b", "4", "--c", "3", "--samples", "2", "--out", str(src)])
    res = runner.invoke(main, ["render", str(src), "--a", "3", "--b", "4", "--c", "3", "--svg", str(tmp_path / "r.svg"),
                               "--index", "1"])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "r.svg").read_text().count("<polygon") >= 3 * 4 + 4 * 3 + 3 * 3


def test_lozenges_cover_hexagon_area():
    d = HexagonDims(2, 3, 2)
    for til in enumerate_tilings(d):
        polys = list(lozenge_polygons(til, d))
        kinds = [k for k, _ in polys]
        assert (kinds.count("flat"), kinds.count("up"), kinds.count("hole")) == (d.a * d.b, d.a * d.c, d.b * d.c)
        for _, pts in polys:
            area = 0.5 * abs(sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1])))
            assert area == 1.0


def test_config_file_and_flag_precedence(runner, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"family": "qracah", "q": 0.8, "kappa_sq": -1.0, "a": 1, "b": 1, "c": 1}))
    res = runner.invoke(main, ["verify", "--config", str(cfg)])
    assert res.exit_code == 0 and "on 1x1x1" in res.output and "QRacah" in res.output
    res = runner.invoke(main, ["verify", "--config", str(cfg), "--a", "2"])
    assert res.exit_code == 0 and "on 2x1x1" in res.output


def test_boundary_rejects_flat_hexagon(runner, tmp_path):
    res = runner.invoke(main, ["boundary", "--c", "0", "--out", str(tmp_path / "b.csv")])
    assert res.exit_code == 1


def test_boundary_writes_csv(runner, tmp_path):
    out = tmp_path / "b.csv"
    res = runner.invoke(main, ["boundary", "--a", "10", "--b", "10", "--c", "10", "--q", "0.93", "--grid", "30",
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert "tangency" in res.output
    rows = out.read_text().splitlines()
    assert rows[0] == "t,x" and rows[1] == rows[-1]


def test_density_both_routes(runner, tmp_path):
    exact = tmp_path / "e.csv"
    limit = tmp_path / "l.csv"
    assert runner.invoke(main, ["density", "--exact", "--out", str(exact)]).exit_code == 0
    assert runner.invoke(main, ["density", "--grid", "5", "--out", str(limit)]).exit_code == 0
    assert exact.read_text().startswith("t,x,rho1")
    assert len(limit.read_text().splitlines()) == 26


def test_unwritable_output(runner, tmp_path):
    res = runner.invoke(main, ["sample", "--out", str(tmp_path / "missing" / "x.txt")])
    assert res.exit_code == 1
