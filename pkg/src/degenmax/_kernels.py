"""Hot inner loops, compiled with numba when available.

Set ``DEGENMAX_NO_NUMBA=1`` to force the pure Python/numpy versions. Both
variants perform the same floating-point operations in the same order, so
results agree bit for bit.
"""
from __future__ import annotations

import os

import numpy as np


def kummer_series_py(a, b, x, tol, max_terms):
    """Partial sums of sum_n (a)_n x^n / ((b)_n n!).

    Stops once three consecutive terms fall below ``tol`` times the running
    sum. Returns ``(sum, terms_used, last_term_magnitude, converged)``.
    """
    term = 1.0
    total = 1.0
    small = 0
    for n in range(max_terms):
        term *= (a + n) / (b + n) * x / (n + 1.0)
        total += term
        if abs(term) < tol * abs(total):
            small += 1
            if small == 3:
                return total, n + 2, abs(term), True
        else:
            small = 0
    return total, max_terms, abs(term), False


def psor_sweep_py(indptr, indices, data, diag, rhs, psi, u, omega):
    """One projected SOR sweep in row order, in place on ``u``.

    Rows with ``diag == 0`` are skipped. Returns the max-norm of the update.
    """
    n = u.shape[0]
    change = 0.0
    for i in range(n):
        d = diag[i]
        if d == 0.0:
            continue
        acc = rhs[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                acc -= data[k] * u[j]
        gs = acc / d
        new = u[i] + omega * (gs - u[i])
        if new < psi[i]:
            new = psi[i]
        delta = abs(new - u[i])
        if delta > change:
            change = delta
        u[i] = new
    return change


def _numba_requested() -> bool:
    return os.environ.get("DEGENMAX_NO_NUMBA", "").strip().lower() not in ("1", "true", "yes")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by DEGENMAX_NO_NUMBA")
    from numba import njit

    kummer_series = njit(cache=False)(kummer_series_py)
    psor_sweep = njit(cache=False)(psor_sweep_py)
    BACKEND = "numba"
except ImportError:
    kummer_series = kummer_series_py
    psor_sweep = psor_sweep_py
    BACKEND = "python"


def as_csr_arrays(matrix):
    """Contiguous CSR component arrays with dtypes the compiled kernels expect."""
    csr = matrix.tocsr()
    csr.sort_indices()
    return (
        np.ascontiguousarray(csr.indptr, dtype=np.int64),
        np.ascontiguousarray(csr.indices, dtype=np.int64),
        np.ascontiguousarray(csr.data, dtype=np.float64),
    )
