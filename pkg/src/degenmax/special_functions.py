"""Confluent hypergeometric functions of real argument.

M(a, b, x) is Kummer's function, summed directly from its power series.
U(a, b, x) is Tricomi's function, assembled from two M evaluations through the
connection formula when b is not an integer. Where U reduces to a polynomial
(a a non-positive integer, or a - b + 1 a non-positive integer) the closed
form is used instead and b may be any real.

Derivatives use the contiguous-parameter recurrences
    M'(a, b, x) = (a / b) M(a + 1, b + 1, x)
    U'(a, b, x) = -a U(a + 1, b + 1, x)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from . import _kernels


class SeriesTruncationError(ArithmeticError):
    """The M series did not settle within ``max_terms`` terms."""

    def __init__(self, message: str, last_term: float):
        super().__init__(message)
        self.last_term = last_term


class UnsupportedParameterError(ValueError):
    """U requested for integer b outside the polynomial closed forms."""


@dataclass(frozen=True)
class HypergeometricParams:
    a: float
    b: float
    series_tol: float = 1e-16
    max_terms: int = 5000

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError("max_terms must be at least 1")
        if not self.series_tol > 0:
            raise ValueError("series_tol must be positive")

    def shifted(self, da: float, db: float) -> "HypergeometricParams":
        return replace(self, a=self.a + da, b=self.b + db)


def _nonpositive_integer(z: float) -> int | None:
    """Return n when z == -n for an integer n >= 0, else None."""
    if z <= 0 and float(z).is_integer():
        return int(-z)
    return None


def _is_integer(z: float) -> bool:
    return float(z).is_integer()


def rgamma(z: float) -> float:
    """1/Gamma(z), zero at the poles of Gamma."""
    if _nonpositive_integer(z) is not None:
        return 0.0
    return 1.0 / math.gamma(z)


def pochhammer(z: float, n: int) -> float:
    """Rising factorial (z)_n = z (z+1) ... (z+n-1), with (z)_0 = 1."""
    out = 1.0
    for k in range(n):
        out *= z + k
    return out


def kummer_M(params: HypergeometricParams, x: float) -> float:
    a, b = float(params.a), float(params.b)
    if _nonpositive_integer(b) is not None:
        raise ValueError(f"M(a, b, x) is undefined for b = {b}")
    total, _, last, ok = _kernels.kummer_series(a, b, float(x), params.series_tol, params.max_terms)
    if not ok:
        raise SeriesTruncationError(
            f"M({a}, {b}, {x}) series not converged after {params.max_terms} terms", last
        )
    return float(total)


def kummer_M_derivative(params: HypergeometricParams, x: float) -> float:
    if params.b == 0:
        raise ValueError("M' needs b != 0")
    if params.a == 0:
        return 0.0
    return params.a / params.b * kummer_M(params.shifted(1, 1), x)


def kummer_M_second_derivative(params: HypergeometricParams, x: float) -> float:
    """M'' from applying the derivative recurrence twice."""
    if params.b == 0 or params.b == -1:
        raise ValueError("M'' needs b not in {0, -1}")
    a, b = params.a, params.b
    if a == 0 or a == -1:
        return 0.0
    return a * (a + 1) / (b * (b + 1)) * kummer_M(params.shifted(2, 2), x)


def _u_negative_integer_a(n: int, b: float, x: float) -> float:
    # U(-n, b, x) = (-1)^n sum_s C(n, s) (b + s)_{n - s} (-x)^s
    total = 0.0
    for s in range(n + 1):
        total += math.comb(n, s) * pochhammer(b + s, n - s) * (-x) ** s
    return (-1) ** n * total


def tricomi_U(params: HypergeometricParams, x: float) -> float:
    a, b, x = float(params.a), float(params.b), float(x)
    if not x > 0:
        raise ValueError("U(a, b, x) is evaluated for x > 0 only")
    if a == 0:
        return 1.0
    n = _nonpositive_integer(a)
    if n is not None:
        return _u_negative_integer_a(n, b, x)
    n = _nonpositive_integer(a - b + 1)
    if n is not None:
        # Kummer's transformation U(a, b, x) = x^(1-b) U(a-b+1, 2-b, x).
        return x ** (1.0 - b) * _u_negative_integer_a(n, 2.0 - b, x)
    if _is_integer(b):
        raise UnsupportedParameterError(
            f"U({a}, {b}, x): integer b needs the logarithmic expansion, which is not implemented"
        )
    first = math.gamma(1.0 - b) * rgamma(a - b + 1.0)
    second = math.gamma(b - 1.0) * rgamma(a)
    out = 0.0
    if first != 0.0:
        out += first * kummer_M(params, x)
    if second != 0.0:
        out += second * x ** (1.0 - b) * kummer_M(params.shifted(1.0 - b, 2.0 - 2.0 * b), x)
    return out


def tricomi_U_derivative(params: HypergeometricParams, x: float) -> float:
    if params.a == 0:
        return 0.0
    return -params.a * tricomi_U(params.shifted(1, 1), x)


def tricomi_U_second_derivative(params: HypergeometricParams, x: float) -> float:
    a = params.a
    if a == 0 or a == -1:
        return 0.0
    return a * (a + 1) * tricomi_U(params.shifted(2, 2), x)


class Regularity(str, Enum):
    C_INF = "C_inf"
    C0_NOT_C1 = "C0_not_C1"
    NOT_C0 = "not_C0"


@dataclass(frozen=True)
class URegularity:
    """Behaviour of U(a, b, .) at x = 0. ``item`` numbers the case (2, 3 or 4)."""

    item: int
    regularity: Regularity
    reason: str


def classify_U_regularity(a: float, b: float) -> URegularity:
    """Smoothness of U(a, b, .) up to x = 0 for a, b >= 0."""
    if a < 0 or b < 0:
        raise ValueError("classification covers a >= 0 and b >= 0 only")
    if a == 0:
        return URegularity(2, Regularity.C_INF, "a = 0: U is the constant 1")
    n = a - b + 1
    if n <= 0 and _is_integer(n) and -n <= b - 1:
        # U = x^(1-b) * polynomial with nonzero constant term
        if b > 1:
            return URegularity(3, Regularity.NOT_C0, f"a = b - 1 - {int(-n)}: U ~ x^(1-b) with b > 1")
        return URegularity(3, Regularity.C0_NOT_C1, f"a = b - 1 - {int(-n)} with b <= 1")
    if 0 < b < 1:
        return URegularity(4, Regularity.C0_NOT_C1, "0 < b < 1: U tends to a finite limit, U' ~ x^(-b)")
    if b == 0:
        return URegularity(4, Regularity.C0_NOT_C1, "b = 0: U -> 1/Gamma(a+1), U' ~ log x")
    return URegularity(4, Regularity.NOT_C0, "b >= 1: U is unbounded as x -> 0")
