"""Time each hot kernel under the compiled and the numpy backend.

    python benchmarks/bench_kernels.py [--repeat N]

Inputs are a rendered synthetic document page, so sizes and content match
what the pipeline actually feeds the kernels.
"""

import argparse
import timeit

import numpy as np

from docanon.kernels import backends
from docanon.synthdoc import make_template, render


def workloads():
    page = render(make_template(0), 1)[0].pixels
    mask = np.ascontiguousarray(page < 128)
    rng = np.random.default_rng(0)
    desc_a = rng.integers(0, 256, (1500, 32), dtype=np.uint8)
    desc_b = rng.integers(0, 256, (1500, 32), dtype=np.uint8)
    h, w = page.shape
    return {
        f"min_filter 15x3 on {w}x{h}": lambda k: k.min_filter(page, 15, 3),
        f"max_filter 15x3 on {w}x{h}": lambda k: k.max_filter(page, 15, 3),
        f"label_boxes on {w}x{h}": lambda k: k.label_boxes(mask),
        f"fast_score t=20 on {w}x{h}": lambda k: k.fast_score(page, 20),
        "hamming_matrix 1500x1500": lambda k: k.hamming_matrix(desc_a, desc_b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = backends()
    if "cython" not in impls:
        print("compiled backend not built; timing the numpy fallback only")
    names = sorted(impls, reverse=True)
    print(f"{'kernel':34}" + "".join(f"{n + ' ms':>12}" for n in names) + f"{'speedup':>10}")
    for label, fn in workloads().items():
        best = {n: min(timeit.repeat(lambda: fn(impls[n]), number=1, repeat=args.repeat)) * 1e3 for n in names}
        speed = f"{best['python'] / best['cython']:>9.1f}x" if "cython" in best else ""
        print(f"{label:34}" + "".join(f"{best[n]:>12.2f}" for n in names) + speed)


if __name__ == "__main__":
    main()
