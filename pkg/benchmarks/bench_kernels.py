"""Time the compiled kernels against their pure Python versions.

    python benchmarks/bench_kernels.py [--n 120] [--repeat 5]

Also confirms the two variants return bit-identical results.
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

from degenmax import _kernels


def laplacian_2d(n):
    h = 1.0 / (n + 1)
    t = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)) / h**2
    eye = sp.identity(n)
    return (sp.kron(t, eye) + sp.kron(eye, t)).tocsr()


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def bench_kummer(repeat):
    xs = np.linspace(-20.0, 20.0, 2001)

    def run(kernel):
        return lambda: np.array([kernel(0.7, 1.3, x, 1e-16, 2000)[0] for x in xs])

    run(_kernels.kummer_series)()  # compile outside the timing
    fast, a = best_of(run(_kernels.kummer_series), repeat)
    slow, b = best_of(run(_kernels.kummer_series_py), repeat)
    return fast, slow, np.array_equal(a, b)


def bench_psor(n, sweeps, repeat):
    indptr, indices, data = _kernels.as_csr_arrays(laplacian_2d(n))
    m = n * n
    diag = laplacian_2d(n).diagonal().copy()
    rhs = np.ones(m)
    psi = np.full(m, 0.01)

    def run(kernel):
        def go():
            u = np.zeros(m)
            for _ in range(sweeps):
                kernel(indptr, indices, data, diag, rhs, psi, u, 1.5)
            return u

        return go

    run(_kernels.psor_sweep)()
    fast, a = best_of(run(_kernels.psor_sweep), repeat)
    slow, b = best_of(run(_kernels.psor_sweep_py), repeat)
    return fast, slow, np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=120, help="grid side for the PSOR sweep")
    ap.add_argument("--sweeps", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    print(f"backend: {_kernels.BACKEND}")
    rows = [
        ("kummer_series x2001", *bench_kummer(args.repeat)),
        (f"psor_sweep {args.n}x{args.n} x{args.sweeps}", *bench_psor(args.n, args.sweeps, args.repeat)),
    ]
    print(f"{'kernel':<28}{'compiled':>12}{'python':>12}{'speedup':>10}  identical")
    for name, fast, slow, same in rows:
        print(f"{name:<28}{fast:>11.4f}s{slow:>11.4f}s{slow / fast:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
