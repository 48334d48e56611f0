"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends are called directly, so the UATPC_PURE_PYTHON setting does not matter here.
"""
import argparse
import time

import numpy as np

from uatpc import kernels
from uatpc.kdtree import build_order
from uatpc.synth import gen_uniform_scenario


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the Python backend is available")

    sc = gen_uniform_scenario(33, 330, 300.0, seed=0)
    rng = np.random.default_rng(0)
    configs = rng.choice(sc.instance.aps[0].allowed_levels, size=(512, 33)).astype(float)
    overlap = sc.instance.channel_overlap.astype(np.uint8)
    pts = rng.normal(size=(5000, 3))
    tree = np.ascontiguousarray(pts[build_order(pts)])
    cases = [
        ("batch_log_utility 512 cfg x 330 RP x 33 AP",
         lambda b: b.batch_log_utility(sc.rp_pl, configs, overlap, -82.0, 1e-9)),
        ("ball_count_many 5000 pts, r=0.2",
         lambda b: b.ball_count_many(tree, tree, 0.2)),
    ]
    print(f"{'kernel':45s} {'backend':8s} {'seconds':>10s} {'speedup':>8s}")
    for name, call in cases:
        results = {}
        for be in backends:
            results[be] = best_of(lambda: call(kernels.get_backend(be)), args.repeat)
        base = results["python"][0]
        for be, (t, out) in results.items():
            print(f"{name:45s} {be:8s} {t:10.4f} {base / t:8.1f}x")
        if len(results) == 2:
            a, b = results["python"][1], results["cython"][1]
            same = np.array_equal(a, b) if a.dtype.kind == "i" else np.allclose(a, b, rtol=1e-12, atol=1e-9)
            print(f"{'':45s} outputs agree: {same}")


if __name__ == "__main__":
    main()
