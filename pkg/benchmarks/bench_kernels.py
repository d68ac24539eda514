"""Compare the compiled and pure-Python integration kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times one long perturbed integration of the reference system and one
stable-graph shooting solve per backend, and reports how far apart the
two backends' results are (they agree to rounding).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from melnikovkit import _kernels, instances
from melnikovkit.separatrix import build_separatrix
from melnikovkit.verify import IntegratorConfig, stable_graph_value


def _best(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--span", type=float, default=20.0, help="integration time")
    args = ap.parse_args(argv)

    cfg = instances.reference()
    orb = build_separatrix(cfg.penduli)
    y0 = np.array([0.3, 0.5, 0.2, 0.05])
    eta = np.array([0.0])
    backends = ["python"] + (["cython"] if _kernels.CSystem is not None else [])
    results = {}
    print(f"{'backend':>8} {'integrate [ms]':>15} {'shooting [ms]':>14}")
    for b in backends:
        kern = _kernels.make_system(cfg, b)
        t_int, (y, status, _, _) = _best(
            lambda: kern.integrate(y0, eta, 0.0, args.span, 1e-3, 1e-10, 1e-12, np.inf, False, None,
                                   False, 200000, False),
            args.repeat,
        )
        icfg = IntegratorConfig(backend=b)
        t_shoot, g = _best(
            lambda: stable_graph_value(cfg, orb, [0.3], [0.2], [0.05], [0.0], 1e-3, icfg=icfg),
            max(1, args.repeat // 2),
        )
        results[b] = (y, g.P)
        print(f"{b:>8} {1e3 * t_int:15.3f} {1e3 * t_shoot:14.1f}")
    if len(results) == 2:
        (y_py, p_py), (y_c, p_c) = results["python"], results["cython"]
        print(f"max |state difference| = {np.max(np.abs(y_py - y_c)):.3e}")
        print(f"max |graph difference| = {np.max(np.abs(p_py - p_c)):.3e}")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
