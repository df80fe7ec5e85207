"""Monte Carlo SIR of the typical user in a Poisson cellular network with limited feedback.

The typical user sits at the origin and is served by the nearest BS of a
homogeneous PPP restricted to a disc. All SIR quantities are normalized by
the serving-link pathloss, so transmit power and absolute distances cancel.

Randomness: one master seed. Realizations are processed in fixed-size blocks;
block ``b`` draws from ``SeedSequence(seed, spawn_key=(b,))`` split into
independent streams for geometry, interference gains, serving channels and
quantization. Results therefore do not depend on scheduling or worker count,
and changing only the quantizer (or ``B``) keeps networks and channels fixed.
"""
from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .analytic import Mode, SystemParams, delta_of
from .errors import DomainError
from .results import CurveResult, CurveRow

log = logging.getLogger(__name__)

BLOCK = 1000
MIN_ESTIMATE_SAMPLES = 100
MAX_RVQ_BITS = 22
RVQ_SCAN_MAX_BITS = 12
ZF_CONDITION_LIMIT = 1e8
# complex entries of one RVQ codebook tensor held in memory at once
_RVQ_CHUNK_ENTRIES = 1 << 22


class Quantizer(str, enum.Enum):
    RVQ = "RVQ"
    SCVQ = "SCVQ"
    PERFECT = "PERFECT"


@dataclass(frozen=True)
class NetworkRealization:
    bs_points: np.ndarray  # (M, 2) metres
    serving_index: int
    region_radius: float

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(self.bs_points[:, 0], self.bs_points[:, 1])


@dataclass(frozen=True)
class QuantizationOutcome:
    h_hat: np.ndarray
    sin2_theta: float
    method: Quantizer


@dataclass
class SirSampleSet:
    sir: np.ndarray
    desired: np.ndarray
    iui: np.ndarray
    ici: np.ndarray
    mode: Mode
    params: SystemParams
    quantizer: Quantizer
    seed: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.sir)


# --------------------------------------------------------------------------
# random primitives
# --------------------------------------------------------------------------


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """IID CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def isotropic_unit(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit vectors uniform on the complex sphere along the last axis."""
    g = complex_gaussian(rng, shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def haar_unitary(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """``count`` Haar-distributed ``n x n`` unitaries (QR with phase fix)."""
    q, r = np.linalg.qr(complex_gaussian(rng, (count, n, n)))
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


def inner_gain(h: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``|h^* v|^2`` along the last axis."""
    return np.abs(np.sum(h.conj() * v, axis=-1)) ** 2


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------


def default_region_radius(lambda_bs: float, beta: float, mean_count: float = 500.0) -> float:
    """Disc radius holding ``mean_count`` BSs on average; doubled for ``beta <= 2.5``."""
    radius = math.sqrt(mean_count / (lambda_bs * math.pi))
    return 2.0 * radius if beta <= 2.5 else radius


def sample_network(lambda_bs: float, region_radius: float, rng: np.random.Generator,
                   max_retries: int = 1000) -> NetworkRealization:
    """PPP in the disc of radius ``region_radius`` around the typical user."""
    mean = lambda_bs * math.pi * region_radius**2
    for retries in range(max_retries):
        count = rng.poisson(mean)
        if count > 0:
            break
    else:
        raise DomainError(f"no BS in {max_retries} draws; mean count {mean:.3g} too small")
    r = region_radius * np.sqrt(rng.random(count))
    phi = rng.uniform(0.0, 2.0 * math.pi, count)
    points = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    net = NetworkRealization(points, int(np.argmin(r)), region_radius)
    object.__setattr__(net, "retries", retries)
    return net


def tail_interference_mean(r1, lambda_bs, region_radius, beta, mean_gain):
    """Mean normalized interference of the PPP outside the simulation disc."""
    return (2.0 * math.pi * lambda_bs * mean_gain / (beta - 2.0)
            * np.asarray(r1) ** beta * region_radius ** (2.0 - beta))


def sample_normalized_ici(
    n: int,
    lambda_bs: float,
    beta: float,
    gain_sampler,
    rng_net: np.random.Generator,
    rng_gain: np.random.Generator,
    region_radius: float | None = None,
    mean_gain: float = 1.0,
    tail_correction: bool = True,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Normalized ICI ``||d1||^beta sum_{i>=2} ||d_i||^-beta g_i`` for ``n`` networks.

    ``gain_sampler(rng, count)`` draws the interferer cross-gains. Only
    distances matter for the SIR, so the batched path skips BS angles.
    Returns ``(ici, r1, empty_redraws)``.
    """
    R = region_radius or default_region_radius(lambda_bs, beta)
    mean = lambda_bs * math.pi * R**2
    counts = rng_net.poisson(mean, n)
    redraws = 0
    while np.any(counts == 0):
        empty = counts == 0
        redraws += int(empty.sum())
        counts[empty] = rng_net.poisson(mean, int(empty.sum()))
    r = R * np.sqrt(rng_net.random(int(counts.sum())))
    gains = gain_sampler(rng_gain, r.size)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    r1 = np.minimum.reduceat(r, starts)
    r1_each = np.repeat(r1, counts)
    ratio = (r1_each / r) ** beta
    serving = r == r1_each
    contrib = np.where(serving, 0.0, ratio * gains)
    ici = np.add.reduceat(contrib, starts)
    if tail_correction:
        ici = ici + tail_interference_mean(r1, lambda_bs, R, beta, mean_gain)
    return ici, r1, redraws


# --------------------------------------------------------------------------
# quantization
# --------------------------------------------------------------------------


def _outcome(h, h_hat, method):
    h_dir = h / np.linalg.norm(h)
    sin2 = float(max(0.0, 1.0 - inner_gain(h_dir, h_hat)))
    return QuantizationOutcome(h_hat, sin2, method)


def quantize_rvq(h: np.ndarray, B: int, rng: np.random.Generator,
                 codebook: np.ndarray | None = None) -> QuantizationOutcome:
    """Random vector quantization with a fresh codebook of ``2^B`` isotropic unit vectors."""
    h_hat = quantize_rvq_batch(np.asarray(h)[None, :], B, rng, codebook)[0]
    return _outcome(h, h_hat, Quantizer.RVQ)


def quantize_rvq_batch(H: np.ndarray, B: int, rng: np.random.Generator,
                       codebook: np.ndarray | None = None) -> np.ndarray:
    """RVQ of each row of ``H``; each row gets its own codebook unless one is given."""
    if B > MAX_RVQ_BITS:
        raise DomainError(
            f"RVQ with B={B} needs a 2^{B}-entry codebook scan; use SCVQ for B > {MAX_RVQ_BITS}"
        )
    rows, n = H.shape
    size = 2**B
    if codebook is not None:
        idx = np.argmax(np.abs(H.conj() @ codebook.T), axis=1)
        return codebook[idx]
    out = np.empty_like(H, dtype=complex)
    step = max(1, _RVQ_CHUNK_ENTRIES // (size * n))
    for lo in range(0, rows, step):
        hi = min(rows, lo + step)
        books = isotropic_unit(rng, (hi - lo, size, n))
        corr = np.abs(np.einsum("rn,rcn->rc", H[lo:hi].conj(), books))
        idx = np.argmax(corr, axis=1)
        out[lo:hi] = books[np.arange(hi - lo), idx]
    return out


def quantize_scvq(h: np.ndarray, B: int, rng: np.random.Generator) -> QuantizationOutcome:
    """Spherical-cap quantization: error drawn from ``F(x) = 2^B x^(N-1)`` on ``[0, delta]``."""
    h_hat = quantize_scvq_batch(np.asarray(h)[None, :], B, rng)[0]
    return _outcome(h, h_hat, Quantizer.SCVQ)


def _cap_direction(H: np.ndarray, sin2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unit vectors at squared-sine distance ``sin2`` from each row of ``H``, isotropic otherwise."""
    h_dir = H / np.linalg.norm(H, axis=1, keepdims=True)
    g = complex_gaussian(rng, H.shape)
    e = g - h_dir * np.sum(h_dir.conj() * g, axis=1, keepdims=True)
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    return np.sqrt(1.0 - sin2)[:, None] * h_dir + np.sqrt(sin2)[:, None] * e


def quantize_scvq_batch(H: np.ndarray, B: int, rng: np.random.Generator) -> np.ndarray:
    rows, n = H.shape
    if n < 2:
        raise DomainError("SCVQ needs N >= 2")
    sin2 = delta_of(n, B) * rng.random(rows) ** (1.0 / (n - 1))
    return _cap_direction(H, sin2, rng)


def sample_rvq_batch(H: np.ndarray, B: int, rng: np.random.Generator) -> np.ndarray:
    """RVQ outcome drawn from its exact distribution instead of scanning a codebook.

    With a fresh isotropic codebook each codeword's error ``1 - |h^* c|^2`` is
    Beta(N-1, 1), so the selected error is the minimum of ``2^B`` such draws,
    ``P[sin^2 <= x] = 1 - (1 - x^(N-1))^(2^B)``, and the residual direction is
    isotropic in the orthogonal complement of ``h``.
    """
    rows, n = H.shape
    if n == 1:
        return H / np.abs(H)
    u = rng.random(rows)
    sin2 = (-np.expm1(np.log(u) * 2.0 ** (-B))) ** (1.0 / (n - 1))
    return _cap_direction(H, sin2, rng)


def quantize_batch(H: np.ndarray, B: int, quant: Quantizer, rng: np.random.Generator,
                   rvq_scan_max_bits: int = RVQ_SCAN_MAX_BITS) -> np.ndarray:
    """Quantize each row of ``H``. RVQ scans a codebook up to ``rvq_scan_max_bits`` bits."""
    quant = Quantizer(quant)
    if quant is Quantizer.PERFECT:
        return H / np.linalg.norm(H, axis=1, keepdims=True)
    if quant is Quantizer.SCVQ:
        return quantize_scvq_batch(H, B, rng)
    if B > rvq_scan_max_bits:
        return sample_rvq_batch(H, B, rng)
    return quantize_rvq_batch(H, B, rng)


# --------------------------------------------------------------------------
# precoding
# --------------------------------------------------------------------------


def precode_mrt(h_hat: np.ndarray) -> np.ndarray:
    return h_hat


def precode_zf(H_hat: np.ndarray) -> np.ndarray:
    """Unit-norm ZF beams (as columns) nulling the other users' quantized directions.

    Accepts ``(K, N)`` or a batch ``(..., K, N)`` of row-stacked ``h_hat``.
    Raises ``np.linalg.LinAlgError`` if a matrix is numerically singular.
    """
    A = np.asarray(H_hat).conj()
    if A.shape[-1] != A.shape[-2]:
        raise DomainError("ZF precoding implemented for K = N")
    if np.any(np.linalg.cond(A) > ZF_CONDITION_LIMIT):
        raise np.linalg.LinAlgError("quantized channel matrix is near singular")
    V = np.linalg.inv(A)
    return V / np.linalg.norm(V, axis=-2, keepdims=True)


# --------------------------------------------------------------------------
# SIR batches
# --------------------------------------------------------------------------


def _exp_gains(rng, n):
    return rng.standard_exponential(n)


def _gamma_gains(N):
    return lambda rng, n: rng.standard_gamma(N, n)


def _explicit_gains(N: int, mode: Mode):
    # cross-gains built from drawn channels and interferer beams
    def sampler(rng, n):
        h = complex_gaussian(rng, (n, N))
        if mode is Mode.MRT:
            return inner_gain(h, isotropic_unit(rng, (n, N)))
        V = haar_unitary(rng, n, N)
        return np.sum(np.abs(np.einsum("in,ink->ik", h.conj(), V)) ** 2, axis=1)

    return sampler


def _block_streams(seed: int, block: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(4)]


def _zf_block(H, B, quant, rng_q, rng_c, scan_bits):
    """Quantize and precode ``(n, K, N)`` channels, redrawing singular cases."""
    n, K, N = H.shape
    redraws = 0
    H_hat = quantize_batch(H.reshape(n * K, N), B, quant, rng_q, scan_bits).reshape(n, K, N)
    while True:
        bad = np.linalg.cond(H_hat.conj()) > ZF_CONDITION_LIMIT
        if not bad.any():
            break
        k = int(bad.sum())
        redraws += k
        H[bad] = complex_gaussian(rng_c, (k, K, N))
        H_hat[bad] = quantize_batch(
            H[bad].reshape(k * K, N), B, quant, rng_q, scan_bits
        ).reshape(k, K, N)
    return H, precode_zf(H_hat), redraws


def _run_block(p: SystemParams, n: int, quant: Quantizer, seed: int, block: int,
               explicit_interferers: bool, tail_correction: bool, region_radius, scan_bits):
    rng_net, rng_gain, rng_chan, rng_quant = _block_streams(seed, block)
    N = p.N
    if explicit_interferers:
        sampler = _explicit_gains(N, p.mode)
    else:
        sampler = _exp_gains if p.mode is Mode.MRT else _gamma_gains(N)
    mean_gain = 1.0 if p.mode is Mode.MRT else float(N)
    ici, _, empty = sample_normalized_ici(
        n, p.lambda_bs, p.beta, sampler, rng_net, rng_gain,
        region_radius=region_radius, mean_gain=mean_gain, tail_correction=tail_correction,
    )
    if p.mode is Mode.MRT:
        h = complex_gaussian(rng_chan, (n, N))
        v = precode_mrt(quantize_batch(h, p.B, quant, rng_quant, scan_bits))
        desired = inner_gain(h, v)
        iui = np.zeros(n)
        singular = 0
    else:
        H = complex_gaussian(rng_chan, (n, N, N))
        H, V, singular = _zf_block(H, p.B, quant, rng_quant, rng_chan, scan_bits)
        # typical user is k = 0; gains toward every beam of its own cell
        g = np.abs(np.einsum("in,ink->ik", H[:, 0, :].conj(), V)) ** 2
        desired = g[:, 0]
        iui = g[:, 1:].sum(axis=1)
    return desired, iui, ici, empty, singular


def run_sir_batch(
    p: SystemParams,
    n_iter: int = 5000,
    quant: Quantizer | str = Quantizer.RVQ,
    rng_seed: int = 0,
    *,
    explicit_interferers: bool = False,
    tail_correction: bool = True,
    region_radius: float | None = None,
    workers: int | None = None,
    rvq_scan_max_bits: int = RVQ_SCAN_MAX_BITS,
) -> SirSampleSet:
    """Simulate ``n_iter`` independent SIR samples of the typical user.

    Interfering cells use the same strategy as the serving cell. Their beams
    are isotropic with respect to the typical user, so the cross-gains are
    Exp(1) (MRT) or chi^2_{2N}/2 (ZF, a unitary frame of ``K = N`` beams);
    these are drawn directly unless ``explicit_interferers`` asks for
    drawn channels and beams. Interference beyond the disc is added at its
    mean when ``tail_correction`` is on. RVQ above ``rvq_scan_max_bits``
    uses :func:`sample_rvq_batch`.
    """
    if n_iter < 1:
        raise DomainError("n_iter must be >= 1")
    quant = Quantizer(quant)
    if quant is Quantizer.SCVQ and p.N < 2:
        raise DomainError("SCVQ needs N >= 2")
    blocks = [(b, min(BLOCK, n_iter - b * BLOCK)) for b in range(math.ceil(n_iter / BLOCK))]
    workers = workers or int(os.environ.get("LIMFB_THREADS", "1"))

    def job(item):
        b, n = item
        return _run_block(p, n, quant, rng_seed, b, explicit_interferers,
                          tail_correction, region_radius, rvq_scan_max_bits)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, blocks))
    else:
        parts = [job(item) for item in blocks]

    desired = np.concatenate([part[0] for part in parts])
    iui = np.concatenate([part[1] for part in parts])
    ici = np.concatenate([part[2] for part in parts])
    meta = {
        "empty_network_redraws": int(sum(part[3] for part in parts)),
        "singular_zf_redraws": int(sum(part[4] for part in parts)),
        "region_radius": region_radius or default_region_radius(p.lambda_bs, p.beta),
        "tail_correction": tail_correction,
    }
    return SirSampleSet(desired / (iui + ici), desired, iui, ici, p.mode, p, quant, rng_seed, meta)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------


def wilson_interval(k, n, z=1.959963984540054):
    k = np.asarray(k, dtype=float)
    phat = k / n
    denom = 1.0 + z**2 / n
    centre = (phat + z**2 / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z**2 / (4 * n**2)) / denom
    return centre - half, centre + half


def _warn_small(n: int) -> None:
    if n < MIN_ESTIMATE_SAMPLES:
        log.warning("estimate from %d samples (< %d); intervals are unreliable",
                    n, MIN_ESTIMATE_SAMPLES)


def estimate_ccdf(samples: SirSampleSet | np.ndarray, query, series: str = "simulation") -> CurveResult:
    """Empirical ``P[SIR > gamma]`` with Wilson 95% intervals."""
    sir = samples.sir if isinstance(samples, SirSampleSet) else np.asarray(samples, dtype=float)
    grid = getattr(query, "gamma_grid", query)
    n = sir.size
    _warn_small(n)
    sorted_sir = np.sort(sir)
    rows = []
    for g in grid:
        k = n - np.searchsorted(sorted_sir, g, side="right")
        lo, hi = wilson_interval(k, n)
        value = float(k / n)
        rows.append(CurveRow(float(g), series, value, min(float(lo), value),
                             max(float(hi), value), "simulation"))
    return CurveResult(rows)


def estimate_rate(samples: SirSampleSet | np.ndarray) -> tuple[float, tuple[float, float]]:
    """Mean of ``log2(1 + SIR)`` with a normal-approximation 95% interval."""
    sir = samples.sir if isinstance(samples, SirSampleSet) else np.asarray(samples, dtype=float)
    _warn_small(sir.size)
    r = np.log2(1.0 + sir)
    mean = float(r.mean())
    half = float(stats.norm.ppf(0.975) * r.std(ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0
    return mean, (mean - half, mean + half)
