"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from daedl import _backend


def cases(rng):
    x = rng.uniform(1e-3, 50.0, size=100_000)
    for batch, classes in ((64, 2), (64, 10), (1024, 10)):
        logits = rng.normal(scale=2.0, size=(batch, classes))
        labels = rng.integers(0, classes, size=batch)
        yield f"edl_batch B={batch} C={classes}", \
            lambda k, z=logits, y=labels: k.edl_batch(z, y, 0.05, 1.0, _backend.PARAM_EXP)
    for name in ("digamma", "trigamma", "lgamma"):
        yield f"{name} n={len(x)}", lambda k, f=name: getattr(k, f)(x)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    names = _backend.available()
    kernels = {n: _backend.get(n) for n in names}
    rng = np.random.default_rng(0)
    print(f"{'case':<28}" + "".join(f"{n + ' (ms)':>16}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, fn in cases(rng):
        times = {}
        for n, k in kernels.items():
            number = 20
            times[n] = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number * 1e3
        line = f"{label:<28}" + "".join(f"{times[n]:>16.4f}" for n in names)
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>10.1f}x"
        print(line)
    if len(names) == 1:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
