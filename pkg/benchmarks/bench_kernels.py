"""Time the compiled kernels against the numpy fallback.

Each backend runs in its own interpreter because the backend flag is read
at import time::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--basin-grid 100]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from modalflow import _accel, _kernels, density as D
from modalflow.cluster_tree import build_grid

repeat, res, nb = (int(v) for v in sys.argv[1:4])
m = D.bimodal2d()
box = D.DEFAULT_BOXES["bimodal2d"]
xs = np.linspace(-4, 7, nb)
ys = np.linspace(-4, 5, nb)
P = np.array(np.meshgrid(xs, ys, indexing="ij")).reshape(2, -1).T
grid = build_grid(m, box, res)
mask = grid.values >= 0.3 * grid.max_value()

def best(fn):
    fn()  # warm-up / compile
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)

C = build_grid(m, box, res).centers()
timings = {
    "grid_eval": best(lambda: _kernels.mixture_eval(C, m._means, m._precs, m._coefs, True)),
    "label_components": best(lambda: _kernels.label_components(mask)),
    "batch_ascent": best(lambda: _kernels.batch_plain_ascent(
        P, m._means, m._precs, m._coefs, atol=1e-9, rtol=1e-9, h_min=1e-12,
        max_steps=100000, g_tol=1e-8)),
}
print(json.dumps({"backend": _accel.backend_name(), "timings": timings}))
"""


def run(flag, args):
    env = dict(os.environ, MODALFLOW_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", WORKER, str(args.repeat), str(args.resolution),
                          str(args.basin_grid)], env=env, check=True, capture_output=True,
                         text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--resolution", type=int, default=512, help="grid cells per axis")
    p.add_argument("--basin-grid", type=int, default=100, help="ascent starts per axis")
    args = p.parse_args(argv)
    t0 = time.perf_counter()
    fast, slow = run("1", args), run("0", args)
    print(f"{'kernel':18s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for k in fast["timings"]:
        a, b = fast["timings"][k], slow["timings"][k]
        print(f"{k:18s} {a:10.4f} {b:10.4f} {b / a:8.1f}x")
    print(f"(total wall time {time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
