"""Real-argument special functions used by the coverage and rate formulas.

Only what the analysis needs is provided: the Gauss hypergeometric function
at real argument ``z < 1`` (the formulas only ever use ``z <= 0``), the gamma
function including negative non-integer arguments, the digamma function for
positive arguments and the (possibly divergent-parameter) incomplete beta
integral.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate, special

from .errors import DomainError, NonConvergenceError

MAX_TERMS = 10_000
SERIES_TOL = 1e-14

# |a - b| this close to an integer makes the 1/z connection formula cancel badly
_INTEGER_GAP = 1e-3


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0 and x == math.floor(x)


@dataclass(frozen=True)
class Hyp2F1Params:
    a: float
    b: float
    c: float
    z: float

    def __post_init__(self):
        if _is_nonpositive_integer(self.c):
            raise DomainError(f"2F1 undefined for c = {self.c} (non-positive integer)")
        if not math.isfinite(self.z) or self.z >= 1.0:
            raise DomainError(f"2F1 argument must be finite and < 1, got z = {self.z}")


def _series(a: float, b: float, c: float, z: float) -> float:
    """Maclaurin series of 2F1, summed until the geometric tail bound drops below tolerance."""
    total = 1.0
    term = 1.0
    for n in range(MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        if term == 0.0:
            return total
        ratio = abs((a + n + 1) * (b + n + 1) / ((c + n + 1) * (n + 2.0)) * z)
        if ratio < 1.0:
            tail = abs(term) * ratio / (1.0 - ratio)
            if tail <= SERIES_TOL * abs(total):
                return total
    raise NonConvergenceError(
        f"2F1({a}, {b}; {c}; {z}) series did not converge in {MAX_TERMS} terms"
    )


def rgamma(x: float) -> float:
    """Reciprocal gamma, zero at the poles."""
    if _is_nonpositive_integer(x):
        return 0.0
    return 1.0 / math.gamma(x)


def _inverse_argument(a: float, b: float, c: float, z: float) -> float:
    # analytic continuation to 1/z, valid for z < -1 when a - b is not an integer
    w = 1.0 / z
    first = (
        math.gamma(b - a) * rgamma(b) * rgamma(c - a)
        * (-z) ** (-a) * _series(a, a - c + 1.0, a - b + 1.0, w)
    )
    second = (
        math.gamma(a - b) * rgamma(a) * rgamma(c - b)
        * (-z) ** (-b) * _series(b, b - c + 1.0, b - a + 1.0, w)
    )
    return math.gamma(c) * (first + second)


def gauss_2f1(a: float | Hyp2F1Params, b: float | None = None, c: float | None = None,
              z: float | None = None) -> float:
    """Gauss hypergeometric function ``2F1(a, b; c; z)`` for real ``z < 1``.

    Takes the four parameters or a single :class:`Hyp2F1Params`.

    Strategy by argument:

    * ``-0.5 < z < 1`` or terminating series: direct Maclaurin sum.
    * ``-2 <= z <= -0.5``: Pfaff transformation
      ``(1 - z)^(-a) 2F1(a, c - b; c; z / (z - 1))``.
    * ``z < -2``: expansion in ``1/z`` (two-term connection formula). When
      ``a - b`` is (close to) an integer that formula degenerates, so the
      Pfaff series is used instead, which converges within the term budget
      only for moderate ``|z|``.

    Raises DomainError for a non-positive integer ``c`` or ``z >= 1`` and
    NonConvergenceError if the series budget is exhausted.
    """
    p = a if isinstance(a, Hyp2F1Params) else Hyp2F1Params(float(a), float(b), float(c), float(z))
    a, b, c, z = p.a, p.b, p.c, p.z
    if z == 0.0:
        return 1.0
    if _is_nonpositive_integer(a) or _is_nonpositive_integer(b) or z > -0.5:
        return _series(a, b, c, z)
    gap = abs((a - b) - round(a - b))
    if z >= -2.0 or gap < _INTEGER_GAP:
        return (1.0 - z) ** (-a) * _series(a, c - b, c, z / (z - 1.0))
    return _inverse_argument(a, b, c, z)


def gamma_fn(x: float) -> float:
    """Gamma function for real ``x``; negative non-integers go through reflection."""
    x = float(x)
    if _is_nonpositive_integer(x):
        raise DomainError(f"gamma has a pole at {x}")
    # math.gamma uses the reflection formula internally for x < 0.5
    return math.gamma(x)


_BERNOULLI_OVER_2K = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def digamma(x: float) -> float:
    """Digamma function for ``x > 0``.

    Shifts the argument up to at least 10 with ``psi(x) = psi(x + 1) - 1/x``
    and finishes with the asymptotic expansion.
    """
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"digamma implemented for x > 0 only, got {x}")
    shift = 0.0
    while x < 10.0:
        shift -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for coeff in _BERNOULLI_OVER_2K:
        series += coeff * power
        power *= inv2
    return shift + math.log(x) - 0.5 / x - series


def incomplete_beta(z: float, a: float, b: float) -> float:
    """Non-normalized incomplete beta integral ``int_0^z t^(a-1) (1-t)^(b-1) dt``.

    ``b <= 0`` is allowed as long as ``z < 1``; that case is integrated
    numerically since the regularized routines assume ``b > 0``.
    """
    z, a, b = float(z), float(a), float(b)
    if not a > 0.0:
        raise DomainError(f"incomplete beta needs a > 0, got {a}")
    if z < 0.0 or z > 1.0:
        raise DomainError(f"incomplete beta needs 0 <= z <= 1, got {z}")
    if z == 1.0 and b <= 0.0:
        raise DomainError("incomplete beta diverges at z = 1 for b <= 0")
    if z == 0.0:
        return 0.0
    if b > 0.0:
        return float(special.betainc(a, b, z) * special.beta(a, b))
    value, err = integrate.quad(
        lambda t: t ** (a - 1.0) * (1.0 - t) ** (b - 1.0),
        0.0, z, epsabs=0.0, epsrel=1e-11, limit=200,
    )
    if not err <= 1e-9 * abs(value):
        raise NonConvergenceError(f"incomplete beta quadrature error {err:.2e} too large")
    return value
