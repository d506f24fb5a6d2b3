"""Command-line interface: scene configs in JSON, reports, CSV and SVG artifacts."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import bm as bm_mod
from .artifacts import Svg, outline, write_csv
from .catalog import NAMES, CatalogEntry, GeodesicSeed, builtin, entry_from_spec
from .curvature import GridSpec, check_cd0n, check_nnc
from .expr import ExpressionError, parse_expression
from .jacobi import concavity_check, jacobi_trace, needle_bm_1d
from .metrize import verify_metrization
from .ode import StepUnderflow
from .sets import Disc, PointCloud, Region, region_from_spec
from .spray import IntegrationError, ShootingError, SprayField, integrate, spray_from_expression
from .surface import ZERO, ConformalChart, DomainError, ScalarField, builtin_chart, chart_from_expression


class ConfigError(ValueError):
    pass


@dataclass
class Scene:
    chart: ConformalChart
    spray: SprayField
    phi: ScalarField
    working: Optional[Region]
    seed_geodesic: Optional[GeodesicSeed]
    entry: Optional[CatalogEntry]
    cfg: dict


def _phi(text, chart):
    if text is None:
        return chart.weight_phi
    b = chart.bbox
    step = 1e-5 * float(np.hypot(b[1] - b[0], b[3] - b[2]))
    return ScalarField.from_expression(parse_expression(str(text)), fd_step=step)


def _chart(spec) -> ConformalChart:
    if isinstance(spec, str):
        return builtin_chart(spec)
    if "builtin" in spec:
        params = {k: v for k, v in spec.items() if k != "builtin"}
        return builtin_chart(spec["builtin"], **params)
    if "psi" in spec:
        if "bbox" not in spec:
            raise ConfigError("an expression chart needs a bbox [xmin, xmax, ymin, ymax]")
        return chart_from_expression(spec["psi"], spec["bbox"], spec.get("inside"), spec.get("name", "user"))
    raise ConfigError(f"cannot build chart from {spec!r}")


def _spray(spec) -> SprayField:
    if isinstance(spec, str):
        if spec == "geodesic":
            return SprayField.geodesic()
        return spray_from_expression(spec)
    if "kappa" in spec:
        return spray_from_expression(str(spec["kappa"]))
    if "k" in spec:
        return spray_from_expression(str(spec["k"]))
    raise ConfigError(f"cannot build spray from {spec!r}")


def build_scene(cfg: dict) -> Scene:
    entry = entry_from_spec(cfg["entry"]) if "entry" in cfg else None
    if entry is None and not ("chart" in cfg and "spray" in cfg):
        raise ConfigError("config needs an 'entry' or both 'chart' and 'spray'")
    chart = _chart(cfg["chart"]) if "chart" in cfg else entry.chart
    spray = _spray(cfg["spray"]) if "spray" in cfg else entry.spray
    phi = _phi(cfg.get("phi"), chart) if "phi" in cfg else (entry.phi if entry else ZERO)
    working = region_from_spec(cfg["region"]) if "region" in cfg else (entry.working if entry else None)
    if working is not None:
        working.check_in(chart)
    seed = entry.seed if entry else None
    if "start" in cfg:
        seed = GeodesicSeed(tuple(cfg["start"]), float(cfg.get("theta", 0.0)), float(cfg.get("T", 1.0)))
    return Scene(chart, spray, phi, working, seed, entry, cfg)


def _need(cfg, key):
    if key not in cfg:
        raise ConfigError(f"config is missing {key!r}")
    return cfg[key]


def _positive(cfg, key):
    v = cfg.get(key)
    if v is not None and not float(v) > 0:
        raise ConfigError(f"{key} must be positive")
    return None if v is None else float(v)


def _report(out: Path, text: str):
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)


def _scene_bbox(sc: Scene, extra=()):
    boxes = [r.bbox for r in extra]
    if sc.working is not None:
        boxes.append(sc.working.bbox)
    if not boxes:
        boxes.append(sc.chart.bbox)
    B = np.array(boxes)
    return (B[:, 0].min(), B[:, 1].max(), B[:, 2].min(), B[:, 3].max())


# ------------------------------------------------------------ commands

def cmd_geodesic(sc: Scene, out: Path) -> int:
    seed = sc.seed_geodesic
    if seed is None:
        raise ConfigError("geodesic needs 'start', 'theta' and 'T' (or a catalog entry)")
    n = int(sc.cfg.get("n", 201))
    t = np.linspace(0.0, seed.T, n)
    tr = integrate(sc.chart, sc.spray, seed.start, seed.theta0, seed.T, tol=float(sc.cfg.get("tol", 1e-10)))
    t = t[t <= tr.t[-1]]
    S = tr.at(t)
    write_csv(out / "geodesic.csv", ["t", "x", "y", "theta"], np.column_stack([t, S]))
    svg = Svg(_scene_bbox(sc, [Disc(tuple(S[:, :2].mean(0)), max(np.ptp(S[:, 0]), np.ptp(S[:, 1]), 1e-9) / 2)]))
    if sc.working is not None:
        for ring in outline(sc.working):
            svg.polyline(ring, stroke="gray", closed=True)
    svg.polyline(S[:, :2], stroke="black", width=1.5)
    svg.points(S[:1, :2], r=3, fill="green", opacity=1)
    svg.save(out / "geodesic.svg")
    end = tr.states[-1]
    text = (f"start: ({seed.start[0]:.12g}, {seed.start[1]:.12g}) theta0: {seed.theta0:.12g}\n"
            f"arclength: {tr.t[-1]:.12g} of {seed.T:.12g}\n"
            f"endpoint: ({end[0]:.12g}, {end[1]:.12g}) theta: {end[2]:.12g}\n"
            f"steps: {tr.n_accepted} accepted, {tr.n_rejected} rejected\n"
            f"verdict: {'left the chart domain' if tr.exited else 'completed'}\n")
    _report(out, text)
    return 1 if tr.exited else 0


def cmd_check(sc: Scene, out: Path) -> int:
    cfg = sc.cfg
    if "grid" in cfg:
        if sc.working is None:
            raise ConfigError("a 'grid' setting needs a 'region' or a catalog entry")
        grid = GridSpec.for_region(sc.working, int(cfg["grid"].get("n", 64)))
    elif sc.entry is not None and "region" not in cfg:
        grid = sc.entry.grid_spec()
    elif sc.working is not None:
        grid = GridSpec.for_region(sc.working)
    else:
        raise ConfigError("check-condition needs a 'region' or a catalog entry")
    n_angles = int(cfg.get("n_angles", 16))
    if cfg.get("condition", "nnc") == "cd0n":
        rep = check_cd0n(sc.chart, sc.spray, sc.phi, float(cfg.get("N", 3.0)), grid, n_angles=n_angles)
    else:
        rep = check_nnc(sc.chart, sc.spray, sc.phi, grid, n_angles=n_angles)
    write_csv(out / "condition.csv", ["x", "y", "min_value"], np.column_stack([rep.points, rep.values]))
    P = rep.points
    svg = Svg(_scene_bbox(sc))
    d = np.diff(np.unique(np.round(P[:, 0], 12)))
    svg.cells(P, rep.values, float(np.median(d)) * 1.05 if len(d) else 0.01)
    if sc.working is not None:
        for ring in outline(sc.working):
            svg.polyline(ring, stroke="black", closed=True)
    svg.points(np.array([rep.argmin]), r=3, fill="black", opacity=1)
    svg.save(out / "condition.svg")
    _report(out, rep.text())
    return 0 if rep.holds else 1


def cmd_jacobi(sc: Scene, out: Path) -> int:
    seed = sc.seed_geodesic
    if seed is None:
        raise ConfigError("jacobi needs 'start', 'theta' and 'T' (or a catalog entry)")
    cfg = sc.cfg
    tr = jacobi_trace(sc.chart, sc.spray, seed.start, seed.theta0, seed.T,
                      offset=tuple(cfg.get("offset", (0.0, 0.0, 1.0))), eps=float(cfg.get("eps", 1e-4)),
                      n=int(cfg.get("n", 201)), phi=sc.phi)
    rep = concavity_check(tr, cfg.get("tol"))
    d2 = np.concatenate([[np.nan], tr.second_difference(), [np.nan]])
    write_csv(out / "jacobi.csv", ["t", "J", "second_difference"], np.column_stack([tr.t, tr.J, d2]))
    text = (f"offset (dx, dy, dtheta): {tr.offset}\nJ(0): {tr.J[0]:.12g}  max J: {tr.J.max():.12g}\n"
            f"max second difference: {rep.max_second_difference:.6g} at t = {rep.location:.6g}\n"
            f"tolerance: {rep.tolerance:.3g}\nverdict: {rep.verdict}\n"
            "note: one sampled variation; this does not certify concavity for every Jacobi field\n")
    _report(out, text)
    return 0 if rep.concave else 1


def _sets(sc: Scene):
    return region_from_spec(_need(sc.cfg, "A")), region_from_spec(_need(sc.cfg, "B"))


def cmd_minkowski(sc: Scene, out: Path) -> int:
    A, B = _sets(sc)
    lam = float(_need(sc.cfg, "lambda"))
    spacing = _positive(sc.cfg, "spacing") or bm_mod.default_cell(A, B) / 2
    M = bm_mod.minkowski_average(sc.chart, sc.spray, A, B, lam, spacing)
    write_csv(out / "minkowski.csv", ["x", "y"], M.points)
    svg = Svg(_scene_bbox(sc, [A, B]))
    for reg, col in ((A, "blue"), (B, "red")):
        for ring in outline(reg):
            svg.polyline(ring, stroke=col, closed=True)
    svg.points(M.points, r=0.6, fill="black", opacity=0.4)
    svg.save(out / "minkowski.svg")
    _report(out, f"lambda: {lam:g}\nspacing: {spacing:g}\npairs: {M.meta['pairs']}\n"
                 f"points: {len(M.points)}\nfailed shootings: {M.n_failed}\n")
    return 0


def _bm_defaults(sc: Scene, A, B, mode):
    cell = _positive(sc.cfg, "cell")
    if cell is None:
        if mode == "polygon":
            cell = sc.working.diameter / 512 if sc.working is not None else bm_mod.default_cell(A, B) / 8
        else:
            cell = bm_mod.default_cell(A, B)
    spacing = _positive(sc.cfg, "spacing")
    return cell, spacing


def cmd_verify_bm(sc: Scene, out: Path) -> int:
    A, B = _sets(sc)
    lam = float(_need(sc.cfg, "lambda"))
    if not 0 <= lam <= 1:
        raise ConfigError("lambda must lie in [0, 1]")
    N = float(sc.cfg.get("N", 2.0))
    mode = sc.cfg.get("mode", "cloud")
    cell, spacing = _bm_defaults(sc, A, B, mode)
    rep = bm_mod.verify_bm(sc.chart, sc.spray, A, B, lam, N, spacing, cell, sc.phi, area_mode=mode)
    write_csv(out / "bm.csv", bm_mod.BmReport.CSV_FIELDS, [rep.csv_row()])
    _report(out, rep.text())
    return 0 if rep.holds else 1


def cmd_find_violation(sc: Scene, out: Path) -> int:
    seed = sc.seed_geodesic
    if seed is None:
        raise ConfigError("find-violation needs a seed geodesic ('start', 'theta', 'T') or a catalog entry")
    v = bm_mod.find_violation(sc.chart, sc.spray, seed, sc.phi, budget=int(sc.cfg.get("budget", 6)),
                              lam=float(sc.cfg.get("lambda", 0.5)))
    if v.A is not None:
        rep = v.report
        scene = {k: sc.cfg[k] for k in ("entry", "chart", "spray", "phi") if k in sc.cfg}
        scene.update({"A": {"polygon": [list(p) for p in v.A.vertices]},
                      "B": {"polygon": [list(p) for p in v.B.vertices]},
                      "lambda": v.lam, "N": 2.0, "cell": rep.cell, "spacing": rep.spacing, "mode": "cloud"})
        (out / "violation.json").write_text(json.dumps(scene, indent=2) + "\n")
        write_csv(out / "bm.csv", bm_mod.BmReport.CSV_FIELDS, [rep.csv_row()])
        svg = Svg(_scene_bbox(sc, [v.A, v.B]))
        for reg, col in ((v.A, "blue"), (v.B, "red")):
            svg.polyline(np.asarray(reg.vertices), stroke=col, closed=True, fill=col, opacity=0.3)
        svg.save(out / "violation.svg")
    _report(out, v.text())
    return 1 if v.status == "found" else 0


def cmd_metrize(sc: Scene, out: Path) -> int:
    cfg = sc.cfg
    U = region_from_spec(cfg["U"]) if "U" in cfg else sc.working
    if U is None:
        raise ConfigError("metrize needs a region 'U'")
    bases = _need(cfg, "bases")
    rep = verify_metrization(sc.chart, sc.spray, U, bases, n_squares=int(cfg.get("n_squares", 64)),
                             n_perturb=int(cfg.get("n_perturb", 50)), n_pairs=int(cfg.get("n_pairs", 20)),
                             seed=int(cfg.get("seed", 0)))
    write_csv(out / "eta_grid.csv", ["x", "y", "eta_g_norm"], rep.grid)
    write_csv(out / "stokes.csv", ["x0", "y0", "side", "relative_residual"], rep.stokes)
    _report(out, rep.text())
    return 0 if rep.holds() else 1


def cmd_needle1d(sc_cfg: dict, out: Path) -> int:
    dens = parse_expression(str(_need(sc_cfg, "density")))
    if set(dens.variables) - {"x"}:
        raise ConfigError("the needle density is an expression in x only")
    f = lambda t: dens(t, 0.0 * t)
    lam = float(_need(sc_cfg, "lambda"))
    res = needle_bm_1d(f, _need(sc_cfg, "A1"), _need(sc_cfg, "B1"), lam)
    text = (f"lambda: {lam:g}\nM: {res.M}\nmu(A): {res.mu_A:.12g}\nmu(B): {res.mu_B:.12g}\n"
            f"mu(M): {res.mu_M:.12g}\nlhs: {res.lhs:.12g}\nrhs: {res.rhs:.12g}\nmargin: {res.margin:.12g}\n"
            f"verdict: {'holds' if res.margin >= -1e-9 * max(res.rhs, 1.0) else 'violated'}\n")
    _report(out, text)
    return 0 if res.margin >= -1e-9 * max(res.rhs, 1.0) else 1


def cmd_catalog(out: Optional[Path]) -> int:
    lines = []
    for name in NAMES:
        e = builtin(name, self_test=False)
        lines.append(f"{name:22s} {e.chart.name:22s} expected: {e.expected_verdict}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "geodesic": cmd_geodesic,
    "check-condition": cmd_check,
    "jacobi": cmd_jacobi,
    "minkowski": cmd_minkowski,
    "verify-bm": cmd_verify_bm,
    "find-violation": cmd_find_violation,
    "metrize": cmd_metrize,
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spraylab", description="Spray geometry and Brunn-Minkowski toolkit.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON scene config")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", type=Path, default=Path("spraylab-out"), help="artifact directory")
    common.add_argument("--cell", type=float, help="raster cell size")
    common.add_argument("--spacing", type=float, help="sampling spacing")
    common.add_argument("--lambda", dest="lam", type=float, help="interpolation parameter")
    common.add_argument("--bigN", type=float, help="dimension parameter N")
    common.add_argument("--entry", help="catalog entry, e.g. horocycles or 'circular_arcs(0.5, 2)'")
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["needle1d"]:
        sub.add_parser(name, parents=[common])
    cat = sub.add_parser("catalog", parents=[common])
    cat.add_argument("action", choices=["list"])
    return p


def load_config(args) -> dict:
    cfg = {}
    if args.config is not None:
        try:
            cfg = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for flag, key in (("seed", "seed"), ("cell", "cell"), ("spacing", "spacing"), ("lam", "lambda"),
                      ("bigN", "N"), ("entry", "entry")):
        v = getattr(args, flag)
        if v is not None:
            cfg[key] = v
    cfg.setdefault("seed", 0)
    return cfg


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "catalog":
            return cmd_catalog(args.out)
        cfg = load_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "needle1d":
            return cmd_needle1d(cfg, args.out)
        return COMMANDS[args.command](build_scene(cfg), args.out)
    except (ConfigError, ExpressionError, DomainError, ShootingError, IntegrationError, StepUnderflow,
            ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
