"""Benchmark the compiled kernels against the numpy fallback.

Runs each hot kernel at a paper-scale size (12 views, 4096-d features,
512-d gram output, ~3M-parameter update) and at the desk-scale fixture
size, reporting per-call time for both backends and verifying that they
agree bitwise.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from viewgram.kernels import pyfallback
from viewgram.rng import Rng

try:
    from viewgram.kernels import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_case(name, make_args, call, check, repeats):
    args_c = make_args()
    args_py = make_args()
    t_py = timeit(lambda: call(pyfallback, *args_py), repeats)
    if _ckernels is None:
        print(f"{name:36s} python {t_py * 1e3:9.3f} ms   (no compiled backend)")
        return
    t_c = timeit(lambda: call(_ckernels, *args_c), repeats)
    agree = check(args_c, args_py)
    flag = "bitwise-equal" if agree else "MISMATCH"
    print(f"{name:36s} python {t_py * 1e3:9.3f} ms   compiled {t_c * 1e3:9.3f} ms"
          f"   speedup {t_py / t_c:7.1f}x   {flag}")
    if not agree:
        raise SystemExit(f"backend mismatch in {name}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    repeats = args.repeats

    rng = Rng(0)
    print(f"compiled backend available: {_ckernels is not None}\n")

    for label, views, dim, n in (("paper-scale", 12, 4096, 5),
                                 ("fixture-scale", 12, 32, 3)):
        feats = rng.uniform(-1.0, 1.0, (views, dim))

        bench_case(
            f"gram_windows {label}",
            lambda: [feats.copy(), [None]],
            lambda impl, f, out: out.__setitem__(0, impl.gram_windows(f, n, False)),
            lambda a, b: bool((a[1][0] == b[1][0]).all()),
            repeats,
        )

        dwin = rng.uniform(-1.0, 1.0, (views - n + 1, n * dim))
        bench_case(
            f"gram_windows_backward {label}",
            lambda: [dwin.copy(), [None]],
            lambda impl, d, out: out.__setitem__(
                0, impl.gram_windows_backward(d, n, views, False)
            ),
            lambda a, b: bool((a[1][0] == b[1][0]).all()),
            repeats,
        )

    for label, size in (("3M params", 3_000_000), ("100k params", 100_000)):
        base_p = rng.uniform(-1.0, 1.0, (size,))
        base_g = rng.uniform(-1.0, 1.0, (size,))
        base_v = rng.uniform(-0.1, 0.1, (size,))

        bench_case(
            f"sgd_update {label}",
            lambda: [base_p.copy(), base_g.copy(), base_v.copy()],
            lambda impl, p, g, v: impl.sgd_update(p, g, v, 0.001, 0.9, 1e-4),
            lambda a, b: bool((a[0] == b[0]).all() and (a[2] == b[2]).all()),
            repeats,
        )
        bench_case(
            f"clip_inplace {label}",
            lambda: [base_g.copy()],
            lambda impl, g: impl.clip_inplace(g, 0.01),
            lambda a, b: bool((a[0] == b[0]).all()),
            repeats,
        )

    state = np.array([11, 13, 17, 19], dtype=np.uint64)
    bench_case(
        "fill_uniform 1M draws",
        lambda: [state.copy(), np.empty(1_000_000)],
        lambda impl, s, out: impl.fill_uniform(s, out),
        lambda a, b: bool((a[1] == b[1]).all() and (a[0] == b[0]).all()),
        1,
    )


if __name__ == "__main__":
    main()
