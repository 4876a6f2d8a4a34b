"""Benchmark the compiled kernels against the numpy fallback.

Run with:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from subgridboost import kernels


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, n, c, oc, hw, k, stride, pad):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(size=(n, c, hw, hw)))
    w = np.ascontiguousarray(rng.normal(size=(oc, c, k, k)))
    b = rng.normal(size=oc)
    rows = {}
    for backend, mod in kernels.backends().items():
        y = mod.conv2d_forward(x, w, b, stride, pad)
        gy = np.ascontiguousarray(np.ones_like(y))
        fwd = timeit(lambda: mod.conv2d_forward(x, w, b, stride, pad))
        bwd = timeit(lambda: mod.conv2d_backward(x, w, gy, stride, pad))
        pool_y, pool_idx = mod.maxpool2d_forward(x, 2, 2)
        gp = np.ascontiguousarray(np.ones_like(pool_y))
        pool = timeit(lambda: mod.maxpool2d_forward(x, 2, 2)) + timeit(
            lambda: mod.maxpool2d_backward(gp, pool_idx, x.shape, 2, 2)
        )
        rows[backend] = (fwd, bwd, pool)
    print(f"\n{name}  (batch {n}, conv {c}->{oc}, {hw}x{hw}, k{k})")
    print(f"  {'backend':10s} {'conv fwd':>10s} {'conv bwd':>10s} {'pool f+b':>10s}")
    for backend, (fwd, bwd, pool) in rows.items():
        print(f"  {backend:10s} {fwd * 1e3:9.2f}ms {bwd * 1e3:9.2f}ms {pool * 1e3:9.2f}ms")
    if "compiled" in rows and "numpy" in rows:
        nf, nb_, np_ = rows["numpy"]
        cf, cb, cp = rows["compiled"]
        print(
            f"  {'speedup':10s} {nf / cf:9.2f}x {nb_ / cb:9.2f}x {np_ / cp:9.2f}x"
            "   (numpy time / compiled time)"
        )


def main():
    print(f"active backend: {kernels.BACKEND}")
    print(f"available: {', '.join(kernels.backends())}")
    bench_case("small weak learner", n=64, c=1, oc=8, hw=16, k=3, stride=1, pad=1)
    bench_case("mid weak learner", n=64, c=8, oc=16, hw=16, k=3, stride=1, pad=1)
    bench_case("cifar-scale stem", n=64, c=3, oc=8, hw=32, k=3, stride=1, pad=1)


if __name__ == "__main__":
    main()
