"""
Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--samples 20000] [--repeat 3]

Times the RLS recursion and the Volterra feature products on the Table-I
equalizer (76 terms) and on a small linear equalizer (9 terms).
"""

import argparse
import timeit

import numpy as np

from lifisim import _kernels_py
from lifisim.volterra import VolterraConfig, _lag_arrays, build_term_set
from lifisim.wdm import table1_volterra

try:
    from lifisim._ext import rls_core
except ImportError:
    rls_core = None


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if rls_core is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    y = rng.standard_normal(args.samples)
    x = rng.standard_normal(args.samples)
    cases = {
        "linear, 9 terms": build_term_set(VolterraConfig(1, (4,), ())),
        "Table I, 76 terms": build_term_set(table1_volterra(5)),
    }
    print(f"{args.samples} samples, best of {args.repeat}")
    print(f"{'kernel':<12}{'equalizer':<20}{'numpy [s]':>12}{'cython [s]':>12}{'speed-up':>10}")
    for name, terms in cases.items():
        lags, orders = _lag_arrays(terms)
        phi = np.ascontiguousarray(_kernels_py.volterra_products(y, lags, orders))
        N = len(terms)

        def rls(impl):
            return lambda: impl.rls_loop(phi, x, np.eye(N), np.zeros(N), 0.9995)

        def products(impl):
            return lambda: impl.volterra_products(y, lags, orders)

        for label, make in (("rls", rls), ("products", products)):
            t_py = bench(make(_kernels_py), args.repeat)
            t_cy = bench(make(rls_core), args.repeat)
            print(f"{label:<12}{name:<20}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
