"""``modalflow`` command line: tree, flow, project, hybrid and verify."""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import _accel
from . import density as D
from . import io
from .cluster_tree import build_cluster_tree, build_grid, component_count_profile, count_pattern
from .errors import FixtureError, ModalFlowError
from .flow import FlowKind, FlowParams, assign_basins, integrate_flow
from .hybrid import hybrid_sweep
from .transport import iterate_projection_walk, sample_level_set

EXIT_OK, EXIT_VERIFY_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    """Invalid command-line configuration (exit code 2)."""


def _point(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _load(args):
    model = D.load_fixture(args.fixture)
    box = D.fixture_box(args.fixture, model)
    return model, box


def _grid(model, box, resolution):
    return build_grid(model, box, resolution)


def _critical(model, box):
    seeds = build_grid(model, box, 25 if model.dim == 2 else (200 if model.dim == 1 else 8))
    return D.find_critical_points(model, seeds)


def _check_level(t, fmax, what="level"):
    if not 0 < t < fmax:
        raise ConfigError(f"{what} {t} must lie in (0, max f = {fmax:.6g})")


def _check_points(points, dim, what="--start"):
    for p in points:
        if p.size != dim:
            raise ConfigError(f"{what} needs {dim} coordinates, got {p.size}")


def _sample_grid(box, n):
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _out(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------

def cmd_tree(args):
    model, box = _load(args)
    grid = _grid(model, box, args.resolution)
    crits = _critical(model, box)
    fmax = grid.max_value()
    ladder = np.linspace(1e-4 * fmax, 0.999 * fmax, args.levels)
    tree = build_cluster_tree(grid, ladder, critical_points=crits)
    out = _out(args)
    io.write_tree(tree, out / "tree.json", crits)
    prof = component_count_profile(tree)
    io.write_profile(prof, out / "profile.csv")
    print(f"components by ascending level: {count_pattern(prof)}")
    print(f"split events: {len(tree.events)}; wrote {out / 'tree.json'}, {out / 'profile.csv'}")
    return EXIT_OK


def cmd_flow(args):
    model, box = _load(args)
    starts = args.start or [np.asarray(c, dtype=float).mean(axis=0) for c in [box.T]]
    _check_points(starts, model.dim)
    kind = FlowKind(args.kind)
    params = FlowParams(max_steps=args.max_steps, target_level=args.target_level)
    out = _out(args)
    crits = _critical(model, box)
    for k, x in enumerate(starts):
        tr = integrate_flow(model, x, kind, params)
        io.write_trajectory(tr, out / f"trajectory_{k}.csv")
        print(f"start {k}: {tr.stop_reason.value} after {len(tr) - 1} steps at f = {tr.f[-1]:.10g}")
    if args.basin_grid:
        pts = _sample_grid(box, args.basin_grid)
        ba = assign_basins(model, pts, critical_points=crits)
        io.write_basins(pts, ba, out / "basins.csv")
        print(f"basins: {len(ba.modes)} modes, coverage {ba.coverage:.4f}, "
              f"unconverged {ba.unconverged_count}, saddle-trapped {ba.saddle_count}")
    return EXIT_OK


def cmd_project(args):
    model, box = _load(args)
    grid = _grid(model, box, args.resolution)
    fmax = grid.max_value()
    crits = _critical(model, box)
    if args.eta == 0:
        raise ConfigError("--eta must be nonzero")
    if args.start:
        starts = args.start
        _check_points(starts, model.dim)
    else:
        level = args.level if args.level is not None else 0.25 * min(c.value for c in crits)
        _check_level(level, fmax, "--level")
        rng = np.random.default_rng(args.seed)
        starts = list(sample_level_set(model, level, args.n_starts, grid=grid, rng=rng))
    ceiling = args.ceiling
    if ceiling is not None:
        _check_level(ceiling, fmax, "--ceiling")
    out = _out(args)
    for k, x in enumerate(starts):
        w = iterate_projection_walk(model, x, args.eta, level_ceiling=ceiling,
                                    max_steps=args.max_steps)
        io.write_walk(w, out / f"walk_{k}.csv")
        print(f"walk {k}: {w.stop_reason} after {len(w.points) - 1} steps at f = {w.levels[-1]:.10g}")
    return EXIT_OK


def cmd_hybrid(args):
    model, box = _load(args)
    grid = _grid(model, box, args.resolution)
    fmax = grid.max_value()
    crits = _critical(model, box)
    tree = build_cluster_tree(grid, critical_points=crits)
    pts = _sample_grid(box, args.grid_points)
    out = _out(args)
    if args.sweep:
        levels = list(tree.ladder)
    else:
        if args.t is None:
            raise ConfigError("hybrid needs --t or --sweep")
        _check_level(args.t, fmax, "--t")
        levels = [args.t]
    results = hybrid_sweep(model, grid, levels, pts, critical_points=crits, tree=tree)
    if args.sweep:
        rows = []
        for k, r in enumerate(results):
            io.write_hybrid(r, out / f"hybrid_{k:03d}.json", out / f"hybrid_{k:03d}.csv", pts)
            rows.append([r.threshold, r.n_groups, len(r.noise_modes),
                         int(np.sum(r.labels < 0))])
        io.write_csv(out / "hybrid_sweep.csv", ["level", "groups", "noise_modes", "noise_points"],
                     rows)
        print(f"sweep over {len(levels)} levels; wrote {out / 'hybrid_sweep.csv'}")
    else:
        r = results[0]
        io.write_hybrid(r, out / "hybrid.json", out / "hybrid.csv", pts)
        print(f"t = {r.threshold:.6g}: {r.n_groups} group(s) {r.groups}, noise modes {r.noise_modes}, "
              f"{int(np.sum(r.labels < 0))} noise points")
    return EXIT_OK


def cmd_verify(args):
    from .verify import DEFAULT_FIXTURES, REGISTRY, run_all

    fixtures = args.fixtures or ([args.fixture] if args.fixture_given else list(DEFAULT_FIXTURES))
    for fx in fixtures:
        D.load_fixture(fx)  # surface config errors before any work
    if args.tolerance < 0:
        raise ConfigError("--tolerance must be non-negative")
    unknown = sorted(set(args.statements or ()) - set(REGISTRY))
    if unknown:
        raise ConfigError(f"unknown statement id(s) {unknown}; known: {', '.join(REGISTRY)}")
    report = run_all(fixtures, seed=args.seed, tolerance=args.tolerance,
                     statements=args.statements)
    out = _out(args)
    (out / "report.json").write_text(report.to_json())
    print(report.table())
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--fixture", default=None,
                        help="builtin fixture name (%s) or JSON path; default bimodal2d"
                        % ", ".join(sorted(D.BUILTIN_FIXTURES)))
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="cap on worker threads for the compiled kernels")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--resolution", type=_positive_int, default=256,
                        help="grid cells per axis (default 256)")

    p = argparse.ArgumentParser(prog="modalflow",
                                description="Cluster trees, gradient flows and level-set transport "
                                            "for Gaussian mixture densities.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tree", parents=[common], help="cluster tree and component-count profile")
    t.add_argument("--levels", type=_positive_int, default=64, help="ladder size (default 64)")
    t.set_defaults(func=cmd_tree)

    f = sub.add_parser("flow", parents=[common], help="trajectories and basin labels")
    f.add_argument("--start", type=_point, action="append",
                   help="start point 'x1,x2,...' (repeatable; default: box center)")
    f.add_argument("--kind", choices=[k.value for k in FlowKind], default="plain")
    f.add_argument("--target-level", type=float, default=None)
    f.add_argument("--max-steps", type=_positive_int, default=100_000)
    f.add_argument("--basin-grid", type=int, default=100,
                   help="basin labels on an N^d grid over the box (0 to skip; default 100)")
    f.set_defaults(func=cmd_flow)

    pr = sub.add_parser("project", parents=[common], help="iterated metric projection walks")
    pr.add_argument("--start", type=_point, action="append",
                    help="start point (repeatable); default: samples on --level")
    pr.add_argument("--level", type=float, default=None,
                    help="level to sample starts on (default: a quarter of the lowest critical value)")
    pr.add_argument("--n-starts", type=_positive_int, default=4)
    pr.add_argument("--eta", type=float, default=5e-3, help="level step per projection")
    pr.add_argument("--ceiling", type=float, default=None, help="stop at this level")
    pr.add_argument("--max-steps", type=_positive_int, default=10_000)
    pr.set_defaults(func=cmd_project)

    h = sub.add_parser("hybrid", parents=[common], help="level-set groups extended by flow basins")
    h.add_argument("--t", type=float, default=None, help="threshold level")
    h.add_argument("--sweep", action="store_true", help="run every ladder level")
    h.add_argument("--grid-points", type=_positive_int, default=60,
                   help="points per axis to label (default 60)")
    h.set_defaults(func=cmd_hybrid)

    v = sub.add_parser("verify", parents=[common], help="run the verification registry")
    v.add_argument("--fixtures", nargs="+", default=None,
                   help="fixtures to verify (default: bimodal1d bimodal2d normal2d)")
    v.add_argument("--statements", nargs="+", default=None, metavar="ID",
                   help="run only these registry checks (default: all)")
    v.add_argument("--tolerance", type=float, default=1.0,
                   help="pass threshold on each entry's normalized error (default 1)")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.fixture_given = args.fixture is not None
    if args.fixture is None:
        args.fixture = "bimodal2d"
    _accel.set_threads(args.threads)
    try:
        return args.func(args)
    except (ConfigError, FixtureError) as exc:
        print(f"modalflow: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModalFlowError as exc:
        print(f"modalflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
