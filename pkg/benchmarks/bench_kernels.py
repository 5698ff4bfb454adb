"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--rows 512] [--classes 10] [--repeat 200]

Prints the median wall time per call for each kernel and backend, plus the
largest absolute disagreement between the two.
"""

import argparse
import statistics
import time

import numpy as np

from iceconf import _kernels_py

try:
    from iceconf import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _time(fn, args, repeat):
    fn(*args)
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=512)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    z = rng.normal(scale=3, size=(args.rows, args.classes))
    c = rng.uniform(0.01, 0.99, args.rows)
    y = rng.integers(0, args.classes, args.rows)
    idx = np.arange(args.rows * 100, dtype=np.int64)
    cases = {
        "ice_lin_head": (z, c, y),
        "ice_pow_head": (z, c, y),
        "counter_uniform": (7, 0x1CE, idx),
    }
    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["cython"] = _kernels_c
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"{'kernel':<18}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}{'max |diff|':>14}")
    for name, fargs in cases.items():
        times = {b: _time(getattr(m, name), fargs, args.repeat) for b, m in backends.items()}
        line = f"{name:<18}" + "".join(f"{t * 1e6:>11.1f} us" for t in times.values())
        if "cython" in times:
            out_py = getattr(_kernels_py, name)(*fargs)
            out_c = getattr(_kernels_c, name)(*fargs)
            if not isinstance(out_py, tuple):
                out_py, out_c = (out_py,), (out_c,)
            diff = max(float(np.abs(a - b).max()) for a, b in zip(out_py, out_c))
            line += f"{times['python'] / times['cython']:>9.1f}x{diff:>14.1e}"
        print(line)


if __name__ == "__main__":
    main()
