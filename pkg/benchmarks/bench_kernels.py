"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Each kernel runs on inputs shaped like the ones the search produces: a 64x64
image through a 16-channel 3x3 convolution, a 64x64 confusion matrix with 6
classes, a nearest-neighbour query against a 100-entry archive of 192-d
features, non-dominated ranks of a 24-point population and the mean pairwise
distance of 300 feature vectors. Outputs of both backends are checked for
agreement before timing.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from orbit._core import compiled_backend, python_backend


def workloads(rng):
    image = rng.random((64, 64))
    return {
        "conv3x3": (rng.normal(size=(16, 3, 3)), rng.normal(size=16), image),
        "confusion_matrix": (rng.integers(0, 6, (64, 64)), rng.integers(0, 6, (64, 64)), 6),
        "nearest": (rng.normal(size=192), rng.normal(size=(100, 192))),
        "nondominated_ranks": (rng.random((24, 2)),),
        "pairwise_mean_distance": (rng.normal(size=(300, 192)),),
    }


def call(backend, name, args):
    fn = getattr(backend, name)
    if name == "conv3x3":
        w, b, x = args
        return lambda: fn(x, w, b)
    return lambda: fn(*args)


def check_agreement(name, a, b):
    if isinstance(a, tuple):
        return all(check_agreement(name, x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-12, atol=1e-12)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write the timings here")
    args = p.parse_args(argv)
    if compiled_backend is None:
        print("compiled extension not built (or ORBIT_PURE_PYTHON set); nothing to compare", file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'kernel':<24}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, kargs in workloads(rng).items():
        py, cy = call(python_backend, name, kargs), call(compiled_backend, name, kargs)
        if not check_agreement(name, py(), cy()):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 2
        t_py = min(timeit.repeat(py, number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(cy, number=1, repeat=args.repeat)) * 1e3
        rows.append({"kernel": name, "python_ms": t_py, "cython_ms": t_cy, "speedup": t_py / t_cy})
        print(f"{name:<24}{t_py:>12.3f}{t_cy:>12.3f}{t_py / t_cy:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
