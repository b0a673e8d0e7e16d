"""File exports: JSON (sorted keys, shortest round-trip floats) and CSV (17 significant digits)."""
import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if np.isfinite(o) else str(o)
    if hasattr(o, "value") and hasattr(o, "name"):  # enums
        return o.value
    return o


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(_jsonable(obj))
    payload.setdefault("schema_version", SCHEMA_VERSION)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n")
    return path


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _xcols(d):
    return [f"x_{i + 1}" for i in range(d)]


def params_dict(params):
    return _jsonable(asdict(params))


# ---------------------------------------------------------------------------

def write_tree(tree, path, critical_points=None):
    data = tree.to_dict()
    if critical_points is not None:
        data["critical_points"] = [c.to_dict() for c in critical_points]
    return write_json(data, path)


def write_profile(profile, path):
    return write_csv(path, ["level", "components"], profile)


def write_trajectory(traj, path):
    """Trajectory CSV plus a sidecar ``<name>.json`` holding stop reason and parameters."""
    d = traj.x.shape[1]
    rows = ([t, *x, f, g] for t, x, f, g in zip(traj.tau, traj.x, traj.f, traj.grad_norm))
    p = write_csv(path, ["tau", *_xcols(d), "f", "grad_norm"], rows)
    write_json({"stop_reason": traj.stop_reason.value, "kind": traj.kind.value,
                "samples": len(traj), "params": params_dict(traj.params)},
               Path(path).with_suffix(".json"))
    return p


def write_basins(points, assignment, path):
    pts = np.atleast_2d(points)
    rows = ([*x, int(lab)] for x, lab in zip(pts, assignment.labels))
    return write_csv(path, [*_xcols(pts.shape[1]), "label"], rows)


def write_contour(contour, path):
    return write_json(contour.to_dict(), path)


def write_walk(walk, path):
    """Walk CSV (per-step residual diagnostics) plus sidecar with the stop reason."""
    d = walk.points.shape[1]
    rows = []
    for j, (x, f, e) in enumerate(zip(walk.points, walk.levels, walk.eta_effective)):
        r = walk.results[j - 1] if j > 0 else None
        rows.append([j, *x, f, e,
                     r.iterations if r else 0,
                     r.level_residual if r else 0.0,
                     r.normality_residual if r else 0.0])
    p = write_csv(path, ["step", *_xcols(d), "f", "eta_effective", "iterations",
                         "level_residual", "normality_residual"], rows)
    write_json({"stop_reason": walk.stop_reason, "steps": len(walk.points) - 1},
               Path(path).with_suffix(".json"))
    return p


def write_hybrid(result, json_path, csv_path, points):
    write_json(result.to_dict(), json_path)
    pts = np.atleast_2d(points)
    rows = ([*x, int(lab)] for x, lab in zip(pts, result.labels))
    return write_csv(csv_path, [*_xcols(pts.shape[1]), "group"], rows)
