"""Semi-infinite integration, high-order differentiation and monotone root finding."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

from scipy import integrate

from .errors import BracketError, DerivativeInstabilityError, DomainError, NonConvergenceError

Func = Callable[[float], float]

_EPS = 2.0**-52


class Estimate(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class IntegralSpec:
    integrand: Func
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    split_point: float = 1.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("integration tolerances must be positive")
        if not self.split_point > 0:
            raise DomainError("split_point must be positive")


@dataclass(frozen=True)
class DerivativeSpec:
    """Order and location of a numerical derivative.

    ``base_step=None`` picks ``s / max(2, m)``, the widest central stencil that
    stays inside ``s > 0``.
    """

    order: int
    eval_point: float
    base_step: float | None = None
    richardson_levels: int = 6
    rel_tol: float = 1e-4
    abs_tol: float = 1e-9

    def __post_init__(self):
        if not 0 <= self.order <= 16:
            raise DomainError(f"derivative order must be in [0, 16], got {self.order}")
        if not self.eval_point > 0:
            raise DomainError("derivative evaluation point must be positive")
        if self.base_step is not None and not self.base_step > 0:
            raise DomainError("base_step must be positive")
        if self.richardson_levels < 2:
            raise DomainError("need at least two Richardson levels for an error estimate")

    @property
    def step(self) -> float:
        if self.base_step is not None:
            return self.base_step
        return self.eval_point / max(2, self.order)


def _checked(f: Func) -> Func:
    def wrapped(x):
        y = f(x)
        if not math.isfinite(y):
            raise NonConvergenceError(f"integrand returned {y} at {x}")
        return y

    return wrapped


def integrate_interval(
    f: Func, a: float, b: float, rel_tol: float = 1e-8, abs_tol: float = 1e-12, limit: int = 200
) -> Estimate:
    """Adaptive Gauss-Kronrod on ``[a, b]``; integrable endpoint singularities are fine."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(_checked(f), a, b, epsabs=abs_tol, epsrel=rel_tol, limit=limit)
    if err > max(abs_tol, rel_tol * abs(value)) * 10.0:
        raise NonConvergenceError(
            f"quadrature on [{a}, {b}] stalled at error {err:.3e} (value {value:.6e})"
        )
    return Estimate(value, err)


def integrate_tail(
    f: Func, start: float, rel_tol: float = 1e-8, abs_tol: float = 1e-12
) -> Estimate:
    """Integrate ``f`` over ``[start, inf)`` after the change of variables ``u = 1/z``.

    Slowly decaying algebraic tails become integrable endpoint singularities
    at ``u = 0``.
    """
    if not start > 0:
        raise DomainError("tail start must be positive")

    def mapped(u):
        if u == 0.0:
            return 0.0
        return f(1.0 / u) / (u * u)

    return integrate_interval(mapped, 0.0, 1.0 / start, rel_tol, abs_tol)


def integrate_semi_infinite(spec: IntegralSpec) -> Estimate:
    """Integrate ``spec.integrand`` over ``[0, inf)``.

    ``[0, split]`` is integrated directly and the rest by :func:`integrate_tail`.
    """
    head = integrate_interval(spec.integrand, 0.0, spec.split_point, spec.rel_tol, spec.abs_tol)
    tail = integrate_tail(spec.integrand, spec.split_point, spec.rel_tol, spec.abs_tol)
    return Estimate(head.value + tail.value, head.error + tail.error)


def _noise_level(f: Func, s: float) -> float:
    """Standard deviation of the evaluation noise of ``f`` near ``s``.

    High-order differences on a tiny stencil see only noise; dividing by the
    norm of the binomial weights turns them into a per-value deviation. The
    larger of two orders, times two, guards against a lucky cancellation.
    """
    h = 1e-6 * max(abs(s), 1.0)
    start = s - 3.0 * h if s - 3.0 * h >= 0.0 else s
    vals = [f(start + j * h) for j in range(7)]
    sigma = 0.0
    for k in (4, 6):
        d = sum((-1) ** (k - j) * math.comb(k, j) * v for j, v in enumerate(vals[: k + 1]))
        sigma = max(sigma, abs(d) / math.sqrt(math.comb(2 * k, k)))
    scale = max(abs(v) for v in vals)
    return 2.0 * max(sigma, 0.25 * _EPS * scale)


def _difference(f: Func, s: float, m: int, h: float, central: bool) -> float:
    offset = m / 2.0 if central else 0.0
    total = 0.0
    for j in range(m + 1):
        total += (-1) ** (m - j) * math.comb(m, j) * f(s + (j - offset) * h)
    return total / h**m


def _richardson(
    f: Func, s: float, m: int, h: float, levels: int, central: bool, sigma: float
) -> Estimate:
    power = 2 if central else 1
    # independent noise of size sigma on each value, summed with binomial weights
    spread = sigma * math.sqrt(math.comb(2 * m, m))
    best = Estimate(math.nan, math.inf)
    prev_row: list[float] = []
    smallest_step = math.inf
    for level in range(levels):
        step_h = h / 2**level
        row = [_difference(f, s, m, step_h, central)]
        # extrapolation amplifies the noise of the finest difference by at most 1.5
        noise = 1.5 * spread / step_h**m
        for j in range(1, level + 1):
            factor = 2.0 ** (power * j)
            row.append(row[j - 1] + (row[j - 1] - prev_row[j - 1]) / (factor - 1.0))
            err = max(abs(row[j] - row[j - 1]), noise)
            if err < best.error:
                best = Estimate(row[j], err)
        if level > 0:
            # the diagonal shrinks while truncation error dominates and grows
            # again once noise takes over; stop at the turn
            step = abs(row[level] - prev_row[level - 1])
            if step > 2.0 * smallest_step:
                break
            smallest_step = min(smallest_step, step)
        prev_row = row
    return best


def derivative_n(f: Func, spec: DerivativeSpec) -> Estimate:
    """m-th derivative by finite differences with Richardson extrapolation.

    Central differences (error in even powers of h) are tried first. When
    they do not settle, typically because the stencil width is capped by the
    distance to ``s = 0``, forward differences with a step of ``s`` are tried
    as well. The step is halved per level and the tableau entry with the
    smallest estimated error wins.
    """
    m, s = spec.order, spec.eval_point
    if m == 0:
        return Estimate(f(s), 0.0)

    def good(est: Estimate) -> bool:
        return est.error <= max(spec.rel_tol * abs(est.value), spec.abs_tol)

    h = spec.step
    sigma = _noise_level(f, s)
    candidates = []
    if s - (m / 2.0) * h > 0.0:
        candidates.append(
            _richardson(f, s, m, h, spec.richardson_levels, central=True, sigma=sigma)
        )
    if not candidates or not good(candidates[0]):
        forward_step = max(h, s, 0.25) if spec.base_step is None else h
        candidates.append(
            _richardson(
                f, s, m, forward_step, spec.richardson_levels + 2, central=False, sigma=sigma
            )
        )
    best = min(candidates, key=lambda est: est.error)
    if not good(best):
        raise DerivativeInstabilityError(
            f"order-{m} derivative at s={s} unstable: value {best.value:.6e}, "
            f"error estimate {best.error:.2e}"
        )
    return best


def find_root_decreasing(
    g: Func, target: float, lo: float, hi: float, max_iter: int = 200
) -> float:
    """Bisection for ``g(x) = target`` with ``g`` strictly decreasing on ``[lo, hi]``."""
    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo >= target >= g_hi):
        raise BracketError(
            f"g({lo})={g_lo:.6g}, g({hi})={g_hi:.6g} do not bracket target {target:.6g}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if abs(g_mid - target) <= 1e-10 * abs(target) or hi - lo <= 1e-9:
            return mid
        if g_mid > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
