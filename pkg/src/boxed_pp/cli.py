"""Command-line front end: sample, render, verify, boundary and density."""
from __future__ import annotations

import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import asymptotics, chains, elliptic, kernel, oracle, sampler
from .weights import (
    DegenerateParameters,
    Elliptic,
    Hahn,
    HexagonDims,
    InadmissibleParameters,
    QHahn,
    QRacah,
    QRacahTrig,
    Racah,
    positivity_case,
)

FAMILIES = ("hahn", "racah", "qhahn", "qracah", "trig", "elliptic")

DEFAULTS = {
    "family": "qhahn",
    "q": 0.5,
    "kappa_sq": -1.0,
    "K": 3.5,
    "alpha": 0.3,
    "beta": 0.9,
    "p": 0.2,
    "u1": "0.8+0.3j",
    "u2": "1.3-0.4j",
    "a": 2,
    "b": 2,
    "c": 2,
    "seed": 0,
    "samples": 1,
    "grid": 50,
}


@dataclass
class RunConfig:
    subcommand: str
    dims: HexagonDims
    params: object
    seed: int = 0
    samples: int = 1
    out: Path | None = None
    svg: Path | None = None
    grid: int = 50
    extra: dict = field(default_factory=dict)


def build_params(family: str, values: dict):
    if family == "hahn":
        return Hahn()
    if family == "racah":
        return Racah(float(values["K"]))
    if family == "qhahn":
        return QHahn(float(values["q"]))
    if family == "qracah":
        return QRacah(float(values["q"]), float(values["kappa_sq"]))
    if family == "trig":
        return QRacahTrig(float(values["alpha"]), float(values["beta"]))
    if family == "elliptic":
        return Elliptic(float(values["p"]), float(values["q"]), complex(values["u1"]), complex(values["u2"]))
    raise click.BadParameter(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")


def _merged(ctx: click.Context, kwargs: dict) -> dict:
    """Flags override the config file, which overrides the defaults."""
    values = dict(DEFAULTS)
    path = kwargs.get("config")
    if path:
        values.update(json.loads(Path(path).read_text()))
    for key, val in kwargs.items():
        if key == "config" or val is None:
            continue
        if ctx.get_parameter_source(key) != click.core.ParameterSource.DEFAULT or key not in values:
            values[key] = val
    return values


def make_config(ctx: click.Context, name: str, kwargs: dict) -> RunConfig:
    v = _merged(ctx, kwargs)
    try:
        dims = HexagonDims(int(v["a"]), int(v["b"]), int(v["c"]))
        params = build_params(v["family"], v)
        if isinstance(params, Elliptic):
            # the identity checks are algebraic; only degenerate thetas are fatal
            elliptic.EllipticWeightCtx(params.p, params.q, params.u1, params.u2)
        else:
            positivity_case(params, dims)
    except (InadmissibleParameters, DegenerateParameters, ValueError) as exc:
        raise click.ClickException(f"rejected parameters: {exc}") from exc
    out = Path(v["out"]) if v.get("out") else None
    svg = Path(v["svg"]) if v.get("svg") else None
    return RunConfig(name, dims, params, int(v["seed"]), int(v["samples"]), out, svg, int(v["grid"]), v)


def common_options(fn):
    opts = [
        click.option("--config", type=click.Path(exists=True, dir_okay=False), help="JSON file of option values."),
        click.option("--family", type=click.Choice(FAMILIES), default=DEFAULTS["family"], show_default=True),
        click.option("--q", type=float, default=DEFAULTS["q"], show_default=True),
        click.option("--kappa-sq", "kappa_sq", type=float, default=DEFAULTS["kappa_sq"], show_default=True),
        click.option("--K", "K", type=float, default=DEFAULTS["K"], show_default=True),
        click.option("--alpha", type=float, default=DEFAULTS["alpha"], show_default=True),
        click.option("--beta", type=float, default=DEFAULTS["beta"], show_default=True),
        click.option("--p", type=float, default=DEFAULTS["p"], show_default=True),
        click.option("--u1", default=DEFAULTS["u1"], show_default=True, help="Complex, e.g. 0.8+0.3j."),
        click.option("--u2", default=DEFAULTS["u2"], show_default=True),
        click.option("--a", type=int, default=DEFAULTS["a"], show_default=True),
        click.option("--b", type=int, default=DEFAULTS["b"], show_default=True),
        click.option("--c", type=int, default=DEFAULTS["c"], show_default=True),
        click.option("--seed", type=int, default=DEFAULTS["seed"], show_default=True),
        click.option("--samples", type=int, default=DEFAULTS["samples"], show_default=True),
        click.option("--out", type=click.Path(dir_okay=False), default=None),
        click.option("--svg", type=click.Path(dir_okay=False), default=None),
        click.option("--grid", type=int, default=DEFAULTS["grid"], show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


# ---------------------------------------------------------------------------
# SVG rendering


COLORS = {"hole": "#d62728", "flat": "#1f77b4", "up": "#f2c14e"}
UNIT = 20.0


def lozenge_polygons(tiling: oracle.Tiling, dims: HexagonDims):
    """``(kind, vertices)`` for every lozenge, in sheared coordinates where slices are columns.

    A hole at (t, x) covers the vertical edge from x to x+1 on column t; a
    path step from (t, x) covers the cell between columns t and t+1.
    """
    slices = tiling.slices
    for t in range(1, dims.T):
        occupied = set(slices[t])
        for x in dims.section_points(t):
            if x not in occupied:
                yield "hole", [(t - 1, x), (t, x), (t + 1, x + 1), (t, x + 1)]
    for t in range(dims.T):
        for x, y in zip(slices[t], slices[t + 1]):
            if y == x:
                yield "flat", [(t, x), (t + 1, x), (t + 1, x + 1), (t, x + 1)]
            else:
                yield "up", [(t, x), (t + 1, x + 1), (t + 1, x + 2), (t, x + 1)]


def _svg_points(vertices, height: float) -> str:
    return " ".join(f"{UNIT * (t + 1):.2f},{height - UNIT * (y + 1):.2f}" for t, y in vertices)


def render_svg(tiling: oracle.Tiling, dims: HexagonDims) -> str:
    width = UNIT * (dims.T + 2)
    height = UNIT * (dims.S + dims.N + 2)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}">']
    for kind, verts in lozenge_polygons(tiling, dims):
        parts.append(f'<polygon points="{_svg_points(verts, height)}" fill="{COLORS[kind]}" stroke="#000000" stroke-width="0.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def boundary_svg(trace: asymptotics.BoundaryTrace, geom: asymptotics.ScaledGeometry) -> str:
    scale = 400.0 / max(geom.T, geom.S + geom.N)
    width, height = scale * geom.T + 20, scale * (geom.S + geom.N) + 20

    def pts(seq):
        return " ".join(f"{10 + scale * t:.2f},{height - 10 - scale * x:.2f}" for t, x in seq)

    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}">',
            f'<polygon points="{pts(geom.vertices())}" fill="#eeeeee" stroke="#000000" stroke-width="1"/>',
            f'<polygon points="{pts(trace.points)}" fill="#9ecae1" stroke="#08519c" stroke-width="1"/>',
            "</svg>",
        ]
    ) + "\n"


# ---------------------------------------------------------------------------
# Verification battery


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(self.value <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name:<44} {self.value:11.3e}  (tol {self.tol:.0e})"


def total_variation(a: dict, b: dict) -> float:
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


def measure_preservation_error(dims: HexagonDims, params) -> float:
    """Worst TV error of every chain pushed against the target law, over all S."""
    N, T = dims.N, dims.T
    worst = 0.0
    marg = {S: oracle.slice_marginals(dims.with_S(S), params) for S in range(min(dims.c + 1, T) + 1)}
    for S in range(dims.c + 1):
        d = dims.with_S(S)
        for t in range(T + 1):
            for kind in ("t+", "t-", "S+", "S-"):
                S2, t2 = chains._target(kind, S, t)
                if not (0 <= S2 <= T and 0 <= t2 <= T):
                    continue
                rows, cols, M = chains.transition_matrix(kind, t, S, d, params)
                src = np.array([marg[S][t].get(r, 0.0) for r in rows])
                dst = np.array([marg[S2][t2].get(c_, 0.0) for c_ in cols])
                worst = max(worst, 0.5 * float(np.abs(src @ M - dst).sum()))
        dist = oracle.exact_distribution(d, params)
        for direction, S2 in (("up", S + 1), ("down", S - 1)):
            if 0 <= S2 <= dims.c:
                pushed = sampler.push_forward(dist, S, direction, N, T, params)
                worst = max(worst, total_variation(pushed, oracle.exact_distribution(dims.with_S(S2), params)))
    return worst


def one_dim_law_error(dims: HexagonDims, params) -> float:
    marg = oracle.slice_marginals(dims, params)
    return max(
        total_variation(chains.slice_measure(t, dims, params).probs, marg[t]) for t in range(dims.T + 1)
    )


def commutation_error(dims: HexagonDims, params) -> float:
    return max(
        chains.commutation_check(dims, params, t, S) for S in range(dims.T + 1) for t in range(dims.T + 1)
    )


def kernel_errors(dims: HexagonDims, params) -> dict:
    ctx = kernel.KernelContext(dims, params)
    pts = [(t, x) for t in range(dims.T + 1) for x in dims.section_points(t)]
    rho1 = max(abs(ctx.entry(t, x, t, x) - oracle.point_correlations(dims, params, [(t, x)])) for t, x in pts)
    rho2 = max(
        abs(kernel.correlation_function([a, b], dims, params, ctx) - oracle.point_correlations(dims, params, [a, b]))
        for a, b in itertools.combinations(pts, 2)
    )
    trace = max(abs(sum(ctx.entry(t, x, t, x) for x in dims.section_points(t)) - dims.N) for t in range(dims.T + 1))
    kast = kernel.kasteleyn_matrix(ctx)
    some = [((t, x), (t + 1, x)) for t, x in kast.left if (t + 1, x) in kast.right][:1]
    inv = kernel.inverse_kasteleyn(some, dims, params, ctx)
    return {"rho1": rho1, "rho2": rho2, "trace": trace, "inverse": inv.identity_residual}


def battery(dims: HexagonDims, params) -> list[Check]:
    """The standard checks on a small hexagon; elliptic parameters run the identity checks."""
    checks = [Check("tiling count vs product formula", abs(oracle.count_tilings(dims) - oracle.macmahon_count(dims.a, dims.b, dims.c)), 0)]
    if isinstance(params, Elliptic):
        ctx = elliptic.EllipticWeightCtx(params.p, params.q, params.u1, params.u2)
        checks.append(Check("elliptic MacMahon rel_err", elliptic.macmahon_check(ctx, dims.a, dims.b, dims.c).rel_err, 1e-10))
        checks.append(Check("zeta MacMahon rel_err (q=0.7, zeta=3)", elliptic.macmahon_check((0.7, 3.0), dims.a, dims.b, dims.c).rel_err, 1e-10))
        checks.append(Check("cube terms vs tiling weights", elliptic.partition_term_residual(ctx, dims.a, dims.b, dims.c), 1e-10))
        tri = elliptic.parallelogram(0, 3, 0, 3)
        checks.append(Check("W inverse identity", elliptic.inverse_identity_residual(ctx, tri), 1e-9))
        return checks
    checks.append(Check("measure preservation (TV)", measure_preservation_error(dims, params), 1e-10))
    checks.append(Check("commutation (relative)", commutation_error(dims, params), 1e-11))
    checks.append(Check("one-dimensional law (TV)", one_dim_law_error(dims, params), 1e-10))
    errs = kernel_errors(dims, params)
    checks.append(Check("kernel rho1 vs enumeration", errs["rho1"], 1e-8))
    checks.append(Check("kernel rho2 vs enumeration", errs["rho2"], 1e-8))
    checks.append(Check("equal-time trace = N", errs["trace"], 1e-10))
    checks.append(Check("inverse Kasteleyn identity", errs["inverse"], 1e-9))
    return checks


# ---------------------------------------------------------------------------
# Commands


@click.group()
def main():
    """Exact sampling and analysis of weighted boxed plane partitions."""


def _fail(message: str, code: int = 1):
    click.echo(message, err=True)
    sys.exit(code)


@main.command()
@common_options
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None,
              help="Write every block draw (S, t, k, l, xi) of the first sample.")
@click.pass_context
def sample(ctx, trace_path, **kwargs):
    """Draw exact samples; write them in the line format (blank line between samples)."""
    cfg = make_config(ctx, "sample", kwargs)
    if isinstance(cfg.params, Elliptic):
        _fail("sampling is not available for the elliptic family")
    if cfg.samples < 1:
        _fail("--samples must be at least 1")
    trace = [] if trace_path else None
    X = sampler.sample_tilings_array(cfg.dims, cfg.params, cfg.samples, cfg.seed, trace=trace)
    tilings = [oracle.Tiling(tuple(tuple(int(v) for v in row) for row in til)) for til in X]
    text = "\n".join(t.to_lines() for t in tilings)
    try:
        if cfg.out:
            cfg.out.write_text(text)
        else:
            click.echo(text, nl=False)
        if cfg.svg:
            cfg.svg.write_text(render_svg(tilings[0], cfg.dims))
        if trace_path:
            Path(trace_path).write_text("S t k l xi\n" + "".join(" ".join(map(str, row)) + "\n" for row in trace))
    except OSError as exc:
        _fail(f"cannot write output: {exc}")


@main.command()
@click.argument("tiling_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--a", type=int, required=True)
@click.option("--b", type=int, required=True)
@click.option("--c", type=int, required=True)
@click.option("--svg", type=click.Path(dir_okay=False), required=True)
@click.option("--index", type=int, default=0, show_default=True, help="Which sample of a multi-sample file.")
def render(tiling_file, a, b, c, svg, index):
    """Render one tiling from a line-format file as SVG."""
    blocks = [blk for blk in Path(tiling_file).read_text().split("\n\n") if blk.strip()]
    dims = HexagonDims(a, b, c)
    til = oracle.Tiling.from_lines(blocks[index])
    oracle.check_tiling(til.slices, dims)
    Path(svg).write_text(render_svg(til, dims))


@main.command()
@common_options
@click.pass_context
def verify(ctx, **kwargs):
    """Run the check battery; exit status 0 iff every check passes."""
    cfg = make_config(ctx, "verify", kwargs)
    cap = oracle.oracle_cap()
    if oracle.macmahon_count(cfg.dims.a, cfg.dims.b, cfg.dims.c) > cap:
        _fail(f"{cfg.dims.a}x{cfg.dims.b}x{cfg.dims.c} exceeds the enumeration cap {cap}")
    checks = battery(cfg.dims, cfg.params)
    report = "\n".join(ch.line() for ch in checks)
    click.echo(f"family {cfg.params!r} on {cfg.dims.a}x{cfg.dims.b}x{cfg.dims.c}\n{report}")
    if cfg.out:
        cfg.out.write_text(report + "\n")
    failed = [ch.name for ch in checks if not ch.ok]
    if failed:
        _fail("failed: " + ", ".join(failed))


def _geometry(cfg: RunConfig, scale: float | None) -> asymptotics.ScaledGeometry:
    scale = scale or float(max(cfg.dims.a, cfg.dims.b, cfg.dims.c))
    return asymptotics.ScaledGeometry.from_hexagon(cfg.dims, cfg.params, scale)


@main.command()
@common_options
@click.option("--scale", type=float, default=None, help="Divide the sides by this (default: the longest side).")
@click.pass_context
def boundary(ctx, scale, **kwargs):
    """Trace the frozen boundary of the scaled hexagon; report tangencies and nodes."""
    cfg = make_config(ctx, "boundary", kwargs)
    try:
        geom = _geometry(cfg, scale)
    except (ValueError, TypeError) as exc:
        _fail(f"invalid geometry: {exc}")
    out = cfg.out or Path("boundary.csv")
    try:
        trace = asymptotics.frozen_boundary(geom, max(cfg.grid, 50) * 4)
    except asymptotics.TraceError as exc:
        partial = out.with_suffix(".partial.csv")
        with open(partial, "w") as fh:
            fh.write("t,x\n" + "".join(f"{t:.12g},{x:.12g}\n" for t, x in exc.partial))
        _fail(f"boundary trace failed: {exc}; partial trace in {partial}")
    asymptotics.write_boundary_csv(out, trace)
    for side, dist in trace.tangency.items():
        click.echo(f"tangency {side:<10} {dist:.3e}")
    nodes = asymptotics.find_nodes(geom)
    for n in nodes:
        where = f"vertex {n.vertex}" if n.vertex is not None else "interior"
        click.echo(f"node at t={n.t:.6g} x={n.x:.6g} ({where})")
    if not nodes:
        click.echo("no nodes")
    if cfg.svg:
        cfg.svg.write_text(boundary_svg(trace, geom))


@main.command()
@common_options
@click.option("--scale", type=float, default=None)
@click.option("--exact/--limit", default=False, help="Finite-size kernel density instead of the limit slopes.")
@click.pass_context
def density(ctx, scale, exact, **kwargs):
    """Write a density map as CSV."""
    cfg = make_config(ctx, "density", kwargs)
    out = cfg.out or Path("density.csv")
    if exact:
        kernel.write_density_csv(out, cfg.dims, cfg.params)
        return
    try:
        geom = _geometry(cfg, scale)
    except (ValueError, TypeError) as exc:
        _fail(f"invalid geometry: {exc}")
    asymptotics.write_density_csv(out, geom, cfg.grid, cfg.grid)


if __name__ == "__main__":
    main()
