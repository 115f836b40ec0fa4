"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --repeat 5
"""

import argparse
import math
import timeit

import numpy as np

from scaleface import _fallback

try:
    from scaleface import _kernels
except ImportError:
    _kernels = None


def cases(rng, n, C, d):
    cos = np.clip(rng.uniform(-1, 1, (n, C)), -1 + 1e-7, 1 - 1e-7)
    labels = rng.integers(0, C, n).astype(np.int64)
    scales = rng.uniform(1, 64, n)
    m = 0.5
    pos = np.sort(rng.normal(1, 1, 20 * n))
    neg = np.sort(rng.normal(0, 1, 20 * n))
    noise = rng.standard_normal((20 * n, d))
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    return {
        "margin_softmax": (cos, labels, scales, math.cos(m), math.sin(m), 1e-7, True),
        "tar_at_far_sorted": (pos, neg, 0.01),
        "cosine_stat": (noise, w, 10.0, 1.0),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=4096, help="batch rows")
    p.add_argument("--classes", type=int, default=100)
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    args_by_kernel = cases(np.random.default_rng(args.seed), args.n, args.classes, args.d)
    print(f"{'kernel':<20}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, call_args in args_by_kernel.items():
        times = {}
        for label, mod in (("python", _fallback), ("compiled", _kernels)):
            if mod is None:
                continue
            fn = getattr(mod, name)
            times[label] = min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat))
        py = times["python"] * 1e3
        if "compiled" in times:
            c = times["compiled"] * 1e3
            print(f"{name:<20}{py:>12.2f}{c:>14.2f}{py / c:>9.1f}x")
        else:
            print(f"{name:<20}{py:>12.2f}{'n/a':>14}{'':>10}")


if __name__ == "__main__":
    main()
