"""Named coefficient fields usable from configs.

Every builder returns a CoefficientField with analytic partials of a.
"""
from __future__ import annotations

from typing import Any

import numpy as np

from .operator_core import CoefficientField


def kummer(a_param: float, b_param: float) -> CoefficientField:
    """-x u'' - (b - x) u' + a u on an interval with left end at 0."""
    a_param, b_param = float(a_param), float(b_param)
    return CoefficientField(
        dim=1,
        a=lambda x: np.array([[x[0]]]),
        b=lambda x: np.array([b_param - x[0]]),
        c=lambda x: a_param,
        da=lambda x: np.ones((1, 1, 1)),
        name="kummer",
        c_nonnegative=a_param >= 0,
    )


def hypergeometric(a_param: float, b_param: float, c_param: float) -> CoefficientField:
    """-x(1-x) u'' - (c - (a+b+1) x) u' + ab u on (0, 1)."""
    a_param, b_param, c_param = float(a_param), float(b_param), float(c_param)
    s = a_param + b_param + 1.0
    return CoefficientField(
        dim=1,
        a=lambda x: np.array([[x[0] * (1.0 - x[0])]]),
        b=lambda x: np.array([c_param - s * x[0]]),
        c=lambda x: a_param * b_param,
        da=lambda x: np.array([[[1.0 - 2.0 * x[0]]]]),
        name="hypergeometric",
        c_nonnegative=a_param * b_param >= 0,
    )


def heston_like(
    kappa: float = 2.0,
    theta: float = 0.04,
    sigma: float = 0.3,
    rho: float = -0.5,
    r: float = 0.03,
    q: float = 0.0,
) -> CoefficientField:
    """Log-price/variance generator; degenerate on the variance floor y = 0."""
    A0 = 0.5 * np.array([[1.0, rho * sigma], [rho * sigma, sigma**2]])

    def da(x):
        out = np.zeros((2, 2, 2))
        out[1] = A0
        return out

    return CoefficientField(
        dim=2,
        a=lambda x: x[1] * A0,
        b=lambda x: np.array([r - q - 0.5 * x[1], kappa * (theta - x[1])]),
        c=lambda x: r,
        da=da,
        name="heston-like",
        c_nonnegative=r >= 0,
    )


def constant(A: Any, b: Any, c: float, dim: int | None = None) -> CoefficientField:
    b = np.atleast_1d(np.asarray(b, dtype=float))
    d = dim or len(b)
    A = np.asarray(A, dtype=float)
    A = A * np.eye(d) if A.ndim == 0 else A.reshape(d, d)
    b = np.broadcast_to(b, (d,)).copy()
    c = float(c)
    return CoefficientField(
        dim=d,
        a=lambda x: A,
        b=lambda x: b,
        c=lambda x: c,
        da=lambda x: np.zeros((d, d, d)),
        name="constant",
        c_nonnegative=c >= 0,
    )


def linear_in_distance(A0: Any, b: Any, c: float, axis: int = -1, origin: float = 0.0, dim: int | None = None):
    """a(x) = (x_axis - origin) A0: degenerate on the hyperplane x_axis = origin."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    d = dim or len(b)
    A0 = np.asarray(A0, dtype=float)
    A0 = A0 * np.eye(d) if A0.ndim == 0 else A0.reshape(d, d)
    b = np.broadcast_to(b, (d,)).copy()
    k = axis % d
    c = float(c)

    def da(x):
        out = np.zeros((d, d, d))
        out[k] = A0
        return out

    return CoefficientField(
        dim=d,
        a=lambda x: (x[k] - origin) * A0,
        b=lambda x: b,
        c=lambda x: c,
        da=da,
        name="linear-in-distance",
        c_nonnegative=c >= 0,
    )


BUILTINS = {
    "kummer": kummer,
    "hypergeometric": hypergeometric,
    "heston-like": heston_like,
    "constant": constant,
    "linear-in-distance": linear_in_distance,
}


def builtin(name: str, params: dict | None = None) -> CoefficientField:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown operator {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**(params or {}))
