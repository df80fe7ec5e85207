"""Coverage, ergodic rate and feedback-bit formulas for limited-feedback MRT and ZF.

Everything here is SIR-only and therefore independent of the BS density;
``SystemParams.lambda_bs`` is carried for the simulator and never read.

Conventions: ``N`` BS antennas, pathloss exponent ``beta > 2``, ``B`` feedback
bits, coherence time ``Tc`` in downlink symbols, and the quantizer resolution
``delta = 2^(-B/(N-1))``. MRT serves one user, ZF serves ``K = N`` users.
Rates are in bps/Hz; ZF rates are per user unless stated otherwise.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from .errors import DomainError
from .quadrature import (
    DerivativeSpec,
    IntegralSpec,
    derivative_n,
    find_root_decreasing,
    integrate_interval,
    integrate_semi_infinite,
    integrate_tail,
)
from .specfun import digamma, gamma_fn, gauss_2f1, incomplete_beta

log = logging.getLogger(__name__)

LOG2E = 1.0 / math.log(2.0)
DEFAULT_LAMBDA = 1e-5 / math.pi
MAX_CCDF_ANTENNAS = 8
RATE_TOL = 1e-10


class Mode(str, enum.Enum):
    MRT = "MRT"
    ZF = "ZF"


class NetRateBasis(str, enum.Enum):
    PER_USER = "per_user"
    SUM = "sum"


@dataclass(frozen=True)
class SystemParams:
    N: int
    beta: float
    B: int = 0
    Tc: int = 1000
    lambda_bs: float = DEFAULT_LAMBDA
    mode: Mode = Mode.MRT

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        if not self.beta > 2:
            raise DomainError(f"pathloss exponent must exceed 2, got {self.beta}")
        if int(self.B) != self.B or self.B < 0:
            raise DomainError(f"B must be a non-negative integer, got {self.B}")
        if int(self.Tc) != self.Tc or self.Tc < 1:
            raise DomainError(f"Tc must be a positive integer, got {self.Tc}")
        if not self.lambda_bs > 0:
            raise DomainError("BS density must be positive")
        if self.mode is Mode.ZF and self.N < 2:
            raise DomainError("ZF serves K = N >= 2 users; N = 1 is not allowed")

    @property
    def K(self) -> int:
        return 1 if self.mode is Mode.MRT else self.N

    @property
    def delta(self) -> float:
        return delta_of(self.N, self.B)


@dataclass(frozen=True)
class NetRateResult:
    B: int
    rate: float
    net_rate: float
    penalty: float


@dataclass(frozen=True)
class CcdfQuery:
    gamma_grid: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        grid = tuple(float(g) for g in self.gamma_grid)
        object.__setattr__(self, "gamma_grid", grid)
        if any(g <= 0 for g in grid):
            raise DomainError("SIR thresholds must be positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError("SIR thresholds must be strictly ascending")


def delta_of(N: int, B: float) -> float:
    """Maximal quantization error ``2^(-B/(N-1))``; zero for a single antenna."""
    if N == 1:
        return 0.0
    return 2.0 ** (-B / (N - 1))


# --------------------------------------------------------------------------
# Laplace transforms
# --------------------------------------------------------------------------


def mrt_desired_laplace(s: float, N: int, B: float) -> float:
    """Laplace transform of the MRT desired gain ``|h^* h_hat|^2``."""
    d = delta_of(N, B)
    return 1.0 / (1.0 + s) * (1.0 + s * (1.0 - d)) ** (-(N - 1))


def mrt_ici_laplace(z: float, beta: float) -> float:
    """Laplace transform of the ICI normalized by the serving-link pathloss (MRT).

    Interferers use beams isotropic to the typical user, so each cross-gain
    is Exp(1).
    """
    if z == 0.0:
        return 1.0
    f = gauss_2f1(1.0, 1.0 - 2.0 / beta, 2.0 - 2.0 / beta, -z)
    return (beta - 2.0) / (beta - 2.0 + 2.0 * z * f)


@lru_cache(maxsize=65536)
def mrt_laplace_I_over_cos2(s: float, N: int, B: float, beta: float) -> float:
    """Laplace transform of ``I / cos^2(theta)`` averaged over the quantization error.

    Integrates ``mrt_ici_laplace(s / (1 - x))`` against the quantization-error
    density ``2^B (N-1) x^(N-2)`` on ``[0, delta]``, rescaled to ``y = x/delta``
    so the density becomes ``(N-1) y^(N-2)`` on ``[0, 1]``.
    """
    if s == 0.0:
        return 1.0
    if N == 1:
        return mrt_ici_laplace(s, beta)
    d = delta_of(N, B)

    def integrand(y):
        x = d * y
        if x >= 1.0:
            return 0.0
        return mrt_ici_laplace(s / (1.0 - x), beta) * (N - 1) * y ** (N - 2)

    return integrate_interval(integrand, 0.0, 1.0, rel_tol=1e-13, abs_tol=1e-15).value


def zf_iui_laplace(s: float, N: int, B: float) -> float:
    """Laplace transform of the residual inter-user interference under ZF."""
    return (1.0 + s * delta_of(N, B)) ** (-(N - 1))


def zf_ici_laplace(s: float, N: int, beta: float) -> float:
    """Laplace transform of the normalized ICI under ZF (chi^2_{2N} cross-gains)."""
    if s == 0.0:
        return 1.0
    return 1.0 / gauss_2f1(N, -2.0 / beta, 1.0 - 2.0 / beta, -s)


def zf_ici_laplace_integral(s: float, N: int, beta: float) -> float:
    """Same transform as :func:`zf_ici_laplace`, from its defining PGFL integral."""
    if s == 0.0:
        return 1.0

    def integrand(x):
        t = 1.0 + x
        u = s * t**-beta
        # 1 - (1+u)^-N without cancellation for small u
        return -math.expm1(-N * math.log1p(u)) * t

    val = integrate_semi_infinite(IntegralSpec(integrand, rel_tol=1e-11, abs_tol=1e-14)).value
    return 1.0 / (1.0 + 2.0 * val)


def zf_ici_laplace_lower(s: float, N: int, beta: float) -> float:
    """Lower bound on the ZF ICI Laplace transform from ``1/(1+x) >= e^-x``."""
    c = (2.0 / beta) * N ** (2.0 / beta) * (-gamma_fn(-2.0 / beta))
    return 1.0 / (1.0 + s ** (2.0 / beta) * c)


# --------------------------------------------------------------------------
# SIR CCDF
# --------------------------------------------------------------------------


def _clamp_probability(value: float, where: str) -> float:
    clamped = min(1.0, max(0.0, value))
    slack = abs(clamped - value)
    if slack > 1e-3:
        log.warning("%s: CCDF %.6f outside [0, 1] by %.2e", where, value, slack)
    elif slack > 0:
        log.debug("%s: clamped numeric slack %.2e", where, slack)
    return clamped


def _check_mode(p: SystemParams, mode: Mode) -> None:
    if p.mode is not mode:
        raise DomainError(f"expected {mode.value} parameters, got {p.mode.value}")


CCDF_TERM_BUDGET = 1e-4


def mrt_sir_ccdf(query: CcdfQuery, p: SystemParams) -> list[float]:
    """SIR coverage probability of limited-feedback MRT.

    With ``||h||^2 ~ Gamma(N, 1)``, ``P[SIR > g] = sum_{m<N} (g^m/m!) (-1)^m L^(m)(g)``
    where ``L`` is :func:`mrt_laplace_I_over_cos2`. Derivatives are numerical;
    each weighted term gets an absolute budget of 1e-4, so with at most eight
    terms the sum stays inside the 1e-3 slack allowed before clamping.
    """
    _check_mode(p, Mode.MRT)
    if p.N > MAX_CCDF_ANTENNAS:
        raise DomainError(
            f"derivative order too high for stable finite differences: N = {p.N} needs "
            f"order {p.N - 1}, at most N = {MAX_CCDF_ANTENNAS} is supported"
        )

    def laplace(s):
        return mrt_laplace_I_over_cos2(s, p.N, p.B, p.beta)

    out = []
    for g in query.gamma_grid:
        total = 0.0
        for m in range(p.N):
            weight = g**m / math.factorial(m)
            spec = DerivativeSpec(m, g, rel_tol=1e-4, abs_tol=CCDF_TERM_BUDGET / weight)
            try:
                deriv = derivative_n(laplace, spec).value
            except ArithmeticError as exc:
                raise type(exc)(f"gamma={g}, m={m}: {exc}") from exc
            total += weight * (-1) ** m * deriv
        out.append(_clamp_probability(total, f"MRT gamma={g}"))
    return out


def zf_sir_ccdf(query: CcdfQuery, p: SystemParams) -> list[float]:
    """SIR coverage probability of ZF: product of the IUI and ICI Laplace transforms."""
    _check_mode(p, Mode.ZF)
    return [
        _clamp_probability(
            zf_iui_laplace(g, p.N, p.B) * zf_ici_laplace(g, p.N, p.beta), f"ZF gamma={g}"
        )
        for g in query.gamma_grid
    ]


# --------------------------------------------------------------------------
# Ergodic rates
# --------------------------------------------------------------------------


def _semi_infinite(f, split: float = 1.0) -> float:
    spec = IntegralSpec(f, rel_tol=RATE_TOL, abs_tol=1e-13, split_point=split)
    return integrate_semi_infinite(spec).value


@lru_cache(maxsize=4096)
def mrt_rate_delta(N: int, beta: float, delta: float) -> float:
    """MRT ergodic rate as a function of the (real) quantizer resolution."""
    mean_desired = 1.0 + (N - 1) * (1.0 - delta)

    def integrand(z):
        if z < 1e-8:
            return mean_desired * mrt_ici_laplace(z, beta)
        log_ls = -math.log1p(z) - (N - 1) * math.log1p(z * (1.0 - delta))
        return -math.expm1(log_ls) / z * mrt_ici_laplace(z, beta)

    return LOG2E * _semi_infinite(integrand)


def mrt_rate(p: SystemParams) -> float:
    """Ergodic rate of single-user MRT with SCVQ feedback, bps/Hz."""
    _check_mode(p, Mode.MRT)
    return mrt_rate_delta(p.N, float(p.beta), p.delta)


def mrt_rate_lower(p: SystemParams) -> float:
    """Closed-form lower bound on the MRT rate (Jensen-type, digamma numerator)."""
    _check_mode(p, Mode.MRT)
    return math.log2(1.0 + (1.0 - p.delta) * math.exp(digamma(p.N)) * (p.beta - 2.0) / 2.0)


def mrt_log_cos2_mean(N: int, B: float) -> float:
    """Exact ``E[ln cos^2 theta]`` under SCVQ.

    Equals ``ln(1 - delta) + 2^B * Beta(delta; N, 0)``; the rate lower bound
    drops the non-negative incomplete-beta term.
    """
    if N == 1:
        return 0.0
    d = delta_of(N, B)
    if d >= 1.0:
        # cos^2 ~ Beta(1, N-1): E[ln] = psi(1) - psi(N)
        return digamma(1.0) - digamma(N)
    return math.log1p(-d) + 2.0**B * incomplete_beta(d, N, 0.0)


@lru_cache(maxsize=4096)
def zf_rate_delta(N: int, beta: float, delta: float) -> float:
    def integrand(z):
        return zf_iui_laplace_delta(z, N, delta) * zf_ici_laplace(z, N, beta) / (1.0 + z)

    return LOG2E * _semi_infinite(integrand)


def zf_iui_laplace_delta(s: float, N: int, delta: float) -> float:
    return (1.0 + s * delta) ** (-(N - 1))


def zf_rate(p: SystemParams) -> float:
    """Per-user ergodic rate of ZF with SCVQ feedback, bps/Hz. Sum rate is ``N`` times this."""
    _check_mode(p, Mode.ZF)
    return zf_rate_delta(p.N, float(p.beta), p.delta)


def zf_rate_lower(p: SystemParams) -> float:
    _check_mode(p, Mode.ZF)
    denom = (p.N - 1) * p.delta + 2.0 * p.N / (p.beta - 2.0)
    return math.log2(1.0 + math.exp(digamma(1.0)) / denom)


# --------------------------------------------------------------------------
# Feedback efficiency and optimum-bit bounds
# --------------------------------------------------------------------------


def _delta_slope(N: int, B: float) -> float:
    """d(delta)/dB."""
    return -math.log(2.0) / (N - 1) * delta_of(N, B)


def _efficiency_args(N, beta, B):
    if isinstance(N, SystemParams):
        return N.N, N.beta, N.B
    if beta is None or B is None:
        raise DomainError("give SystemParams or all of N, beta, B")
    return N, beta, B


def mrt_feedback_efficiency(N: int | SystemParams, beta: float | None = None,
                            B: float | None = None) -> float:
    """Marginal MRT rate per feedback bit, ``dR/dB`` with ``B`` relaxed to the reals.

    Accepts ``(N, beta, B)`` or a single :class:`SystemParams`.

    Computed as ``dR/d(delta) * d(delta)/dB``. The ``log2(e)`` of the rate and
    the ``ln 2 / (N-1)`` of the chain rule cancel against the ``N - 1`` from
    differentiating the desired-signal transform, leaving
    ``delta * int L_I(z) / (1+z) / (1 + z(1-delta))^N dz``.
    """
    N, beta, B = _efficiency_args(N, beta, B)
    if N < 2:
        raise DomainError("feedback efficiency needs N >= 2")
    d = delta_of(N, B)

    def integrand(z):
        return mrt_ici_laplace(z, beta) / (1.0 + z) * (1.0 + z * (1.0 - d)) ** (-N)

    # dR/d(delta) = -log2(e) (N-1) * integral
    d_rate_d_delta = -LOG2E * (N - 1) * _semi_infinite(integrand)
    return d_rate_d_delta * _delta_slope(N, B)


def mrt_feedback_efficiency_lower(N: int, beta: float, B: float) -> float:
    """Jensen lower bound on :func:`mrt_feedback_efficiency` (closed form)."""
    d = delta_of(N, B)
    return d / (2.0 / (beta - 2.0) + 1.0 + N * (1.0 - d))


def zf_feedback_efficiency(N: int | SystemParams, beta: float | None = None,
                           B: float | None = None) -> float:
    """Marginal per-user ZF rate per feedback bit; same chain-rule bookkeeping as MRT."""
    N, beta, B = _efficiency_args(N, beta, B)
    d = delta_of(N, B)

    def integrand(z):
        return z / (1.0 + z) * (1.0 + z * d) ** (-N) * zf_ici_laplace(z, N, beta)

    # the IUI factor only bites near z = 1/delta, far out for fine quantizers,
    # so [1, 1/delta] is integrated in log z before the mapped tail
    knee = max(1.0, 1.0 / d)
    total = integrate_interval(integrand, 0.0, 1.0, RATE_TOL, 1e-15).value
    if knee > 1.0:
        total += integrate_interval(
            lambda t: integrand(math.exp(t)) * math.exp(t), 0.0, math.log(knee), RATE_TOL, 1e-15
        ).value
    total += integrate_tail(integrand, knee, RATE_TOL, 1e-15).value
    d_rate_d_delta = -LOG2E * (N - 1) * total
    return d_rate_d_delta * _delta_slope(N, B)


def zf_feedback_efficiency_asymptotic(N: int, beta: float, B: float) -> float:
    """Large-``B`` lower approximation of :func:`zf_feedback_efficiency`."""
    a = 2.0 / beta
    return gamma_fn(1.0 - a) / (a * N * (-gamma_fn(-a))) * 2.0 ** (-a * B / (N - 1))


def mrt_b_lower(N: int, beta: float, Tc: float) -> float:
    """Lower bound on the net-rate-optimal MRT feedback bits (real valued)."""
    if N < 2 or not beta > 2 or Tc < 1:
        raise DomainError("need N >= 2, beta > 2, Tc >= 1")
    b2 = beta - 2.0
    return (N - 1) * math.log2((b2 * N + b2 * Tc) / (b2 * N + beta))


def mrt_b_lower_approx(N: int, Tc: float) -> float:
    if N < 2 or Tc < 1:
        raise DomainError("need N >= 2, Tc >= 1")
    return (N - 1) * math.log2(Tc)


def _warn_short_coherence(Tc: float) -> None:
    if Tc < 100:
        log.warning("Tc = %s < 100: the large-Tc approximation is outside its regime", Tc)


def zf_b_lower_tilde(N: int, beta: float, Tc: float) -> float:
    """Approximate lower bound on the net-rate-optimal ZF feedback bits (large ``Tc``)."""
    if N < 2 or not beta > 2:
        raise DomainError("need N >= 2, beta > 2")
    _warn_short_coherence(Tc)
    a = 2.0 / beta
    ratio = beta * gamma_fn(1.0 - a) * Tc / (2.0 * N * (-gamma_fn(-a)))
    return (N - 1) * (beta / 2.0) * math.log2(ratio)


def zf_b_lower_coarse(N: int, beta: float, Tc: float) -> float:
    if N < 2 or not beta > 2:
        raise DomainError("need N >= 2, beta > 2")
    _warn_short_coherence(Tc)
    return (N - 1) * (beta / 2.0) * math.log2(Tc)


def mrt_b_lower_numeric(N: int, beta: float, Tc: float) -> float:
    """Root of the Jensen efficiency bound at ``1/Tc``; reproduces :func:`mrt_b_lower`."""
    g = lambda b: mrt_feedback_efficiency_lower(N, beta, b)  # noqa: E731
    return find_root_decreasing(g, 1.0 / Tc, 0.0, 64.0 * (N - 1) + 64.0)


# --------------------------------------------------------------------------
# Net rate and exhaustive bit optimization
# --------------------------------------------------------------------------


def net_rate(rate: float, B: int, Tc: int) -> NetRateResult:
    if Tc < 1:
        raise DomainError("Tc must be >= 1")
    penalty = B / Tc
    return NetRateResult(B=B, rate=rate, net_rate=rate - penalty, penalty=penalty)


def b_search_limit(N: int, beta: float, Tc: int) -> int:
    return math.ceil((N - 1) * (beta / 2.0) * math.log2(Tc)) + 8


def rate_for(mode: Mode, N: int, beta: float, B: int) -> float:
    mode = Mode(mode)
    if mode is Mode.MRT:
        return mrt_rate_delta(N, float(beta), delta_of(N, B))
    return zf_rate_delta(N, float(beta), delta_of(N, B))


def optimize_b(
    mode: Mode | str,
    N: int,
    beta: float,
    Tc: int,
    net_rate_basis: NetRateBasis | str = NetRateBasis.PER_USER,
) -> tuple[int, list[NetRateResult]]:
    """Exact integer argmax of the net rate over ``B in [0, B_max]``.

    ZF rows are per user (rate and penalty ``B/Tc`` of one user) under the
    default ``per_user`` basis; with ``sum`` both are multiplied by ``K = N``,
    which rescales the rows but leaves the argmax unchanged. Ties go to the
    smaller ``B``. A row whose integral fails is logged and skipped.
    """
    mode = Mode(mode)
    basis = NetRateBasis(net_rate_basis)
    SystemParams(N=N, beta=beta, Tc=Tc, mode=mode)
    scale = N if (mode is Mode.ZF and basis is NetRateBasis.SUM) else 1
    table = []
    for B in range(b_search_limit(N, beta, Tc) + 1):
        try:
            r = rate_for(mode, N, beta, B)
        except ArithmeticError as exc:
            log.error("optimize_b: rate integral failed at B=%d: %s", B, exc)
            continue
        row = net_rate(r, B, Tc)
        if scale != 1:
            row = NetRateResult(B, scale * row.rate, scale * row.net_rate, scale * row.penalty)
        table.append(row)
    if not table:
        raise ArithmeticError("every rate integral failed")
    best = max(table, key=lambda row: (row.net_rate, -row.B))
    return best.B, table


def sum_rate(mode: Mode | str, N: int, beta: float, B: int) -> float:
    """Downlink sum rate of a cell: the MRT rate, or ``N`` times the per-user ZF rate."""
    mode = Mode(mode)
    r = rate_for(mode, N, beta, B)
    return r if mode is Mode.MRT else N * r


def sum_net_rate(mode: Mode | str, N: int, beta: float, B: int, Tc: int) -> float:
    """Cell sum of net rates; every served user pays ``B/Tc``."""
    mode = Mode(mode)
    users = 1 if mode is Mode.MRT else N
    return sum_rate(mode, N, beta, B) - users * B / Tc


def laplace_sandwich(s: float, N: int, B: float) -> tuple[float, float, float]:
    """(random beamforming, limited feedback, perfect CSIT) desired-gain transforms."""
    rb = 1.0 / (1.0 + s)
    return rb, mrt_desired_laplace(s, N, B), rb**N


def ccdf(query: CcdfQuery | Sequence[float], p: SystemParams) -> list[float]:
    if not isinstance(query, CcdfQuery):
        query = CcdfQuery(tuple(query))
    return mrt_sir_ccdf(query, p) if p.mode is Mode.MRT else zf_sir_ccdf(query, p)


def rate(p: SystemParams) -> float:
    return mrt_rate(p) if p.mode is Mode.MRT else zf_rate(p)
