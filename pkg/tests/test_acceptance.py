"""Exit criteria, each at its stated tolerance. The terminal summary prints one line per criterion."""
import math

import numpy as np
import pytest
from scipy import stats

from limfb import analytic as an
from limfb import simulator as sim
from limfb.analytic import CcdfQuery, Mode, SystemParams
from limfb.harness import DEFAULT_GAMMA_GRID, DEFAULT_TC_GRID, config_from_dict, run
from limfb.specfun import digamma, gamma_fn, gauss_2f1

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 2024
LAM = an.DEFAULT_LAMBDA
C1 = "1 MRT SCVQ-vs-RVQ gap"
C2 = "2 ZF SCVQ-vs-RVQ gap"
C3 = "3 MRT optimum-bit lower bound"
C4 = "4 ZF optimum-bit approximation"
C5 = "5 ZF coverage vs simulation"
C6 = "6 MRT coverage vs simulation"
C7 = "7 MRT/ZF crossover"
C8 = "8 property suites"
C9 = "9 special functions"


def rate_gaps(mode, record_property):
    gaps = {}
    for B in range(2, 13):
        p = SystemParams(N=4, beta=4.0, B=B, lambda_bs=LAM, mode=mode)
        mean, (lo, _) = sim.estimate_rate(sim.run_sir_batch(p, 5000, sim.Quantizer.RVQ, SEED))
        gaps[B] = (an.rate(p) - mean, mean - lo)
    record_property("detail", "gap(B=2)=%.4f gap(B=12)=%.4f max=%.4f" % (
        gaps[2][0], gaps[12][0], max(g for g, _ in gaps.values())))
    for B, (gap, half) in gaps.items():
        assert -half < gap < 1.0, f"B={B}: gap {gap:.4f}, CI half-width {half:.4f}"
    assert gaps[12][0] < gaps[2][0]


@pytest.mark.criterion(C1, "analytic minus RVQ rate in (-CI, 1) for B=2..12 and shrinking")
def test_criterion_1_mrt_gap(record_property):
    rate_gaps(Mode.MRT, record_property)


@pytest.mark.criterion(C2, "analytic minus RVQ per-user rate in (-CI, 1) for B=2..12 and shrinking")
def test_criterion_2_zf_gap(record_property):
    rate_gaps(Mode.ZF, record_property)


@pytest.mark.criterion(C3, "ceil(bound) <= exhaustive optimum <= ceil(bound) + 3 on the Tc grid")
def test_criterion_3_mrt_bits(record_property):
    gaps = []
    for tc in DEFAULT_TC_GRID:
        b_star, _ = an.optimize_b(Mode.MRT, 4, 4.0, tc)
        bound = math.ceil(an.mrt_b_lower(4, 4.0, tc))
        gaps.append(b_star - bound)
        assert 0 <= b_star - bound <= 3, f"Tc={tc}: optimum {b_star}, bound {bound}"
    record_property("detail", f"optimum minus ceil(bound) = {gaps}")


@pytest.mark.criterion(C4, "|exhaustive optimum - ceil(approximation)| <= 4 on the Tc grid")
def test_criterion_4_zf_bits(record_property):
    gaps = []
    for tc in DEFAULT_TC_GRID:
        b_star, _ = an.optimize_b(Mode.ZF, 4, 4.0, tc)
        approx = math.ceil(an.zf_b_lower_tilde(4, 4.0, tc))
        gaps.append(b_star - approx)
        assert abs(b_star - approx) <= 4, f"Tc={tc}: optimum {b_star}, approximation {approx}"
    record_property("detail", f"optimum minus ceil(approximation) = {gaps}")


def coverage_sup_error(mode, N, B, beta):
    p = SystemParams(N=N, beta=beta, B=B, lambda_bs=LAM, mode=mode)
    samples = sim.run_sir_batch(p, 100_000, sim.Quantizer.SCVQ, SEED)
    emp = sim.estimate_ccdf(samples, DEFAULT_GAMMA_GRID).values("simulation")
    ana = an.ccdf(DEFAULT_GAMMA_GRID, p)
    return max(abs(a - e) for a, e in zip(ana, emp))


CCDF_GRID = [(N, B, beta) for N in (2, 4) for B in (4, 10) for beta in (3.0, 4.0)]


@pytest.mark.criterion(C5, "sup |analytic - empirical| <= 0.02, 1e5 SCVQ samples, 8 settings")
@pytest.mark.parametrize("N,B,beta", CCDF_GRID)
def test_criterion_5_zf_coverage(N, B, beta, record_property):
    err = coverage_sup_error(Mode.ZF, N, B, beta)
    record_property("detail", f"({N},{B},{beta:g}) {err:.4f}")
    assert err <= 0.02


@pytest.mark.criterion(C6, "sup |analytic - empirical| <= 0.02, 1e5 SCVQ samples, 8 settings")
@pytest.mark.parametrize("N,B,beta", CCDF_GRID)
def test_criterion_6_mrt_coverage(N, B, beta, record_property):
    err = coverage_sup_error(Mode.MRT, N, B, beta)
    record_property("detail", f"({N},{B},{beta:g}) {err:.4f}")
    assert err <= 0.02


@pytest.mark.criterion(C7, "MRT ahead at the smallest Tc, ZF ahead at the largest, one crossover")
def test_criterion_7_crossover(tmp_path, record_property):
    cfg = config_from_dict({"experiment": "fig5_crossover", "params": {"N": 4, "beta": 4.0},
                            "seed": SEED, "output": {"dir": str(tmp_path)}})
    out = run(cfg)
    report = out.metadata["crossover"]
    diffs = out.result.values("zf_minus_mrt")
    record_property("detail", "threshold Tc ~ %.0f" % report["crossovers"][0]["threshold_Tc"]
                    if report["crossovers"] else "no crossover")
    assert diffs[0] < 0 < diffs[-1]
    assert report["sign_changes"] == 1


# ---------------------------------------------------------------- criterion 8


@pytest.mark.criterion(C8, "sandwich, bounds, density invariance, distribution identities, ICI mean")
def test_criterion_8_laplace_sandwich():
    for N in (2, 4, 8):
        for B in range(1, 21):
            for s in np.logspace(-3, 3, 25):
                rb, lf, perfect = an.laplace_sandwich(s, N, B)
                assert rb >= lf >= perfect


@pytest.mark.criterion(C8, "sandwich, bounds, density invariance, distribution identities, ICI mean")
def test_criterion_8_interference_bound():
    for N in (2, 4, 8):
        for beta in (2.5, 3.0, 4.0, 5.0):
            for s in np.logspace(-3, 3, 25):
                assert an.zf_ici_laplace_lower(s, N, beta) <= an.zf_ici_laplace(s, N, beta)


@pytest.mark.criterion(C8, "sandwich, bounds, density invariance, distribution identities, ICI mean")
def test_criterion_8_rate_bounds():
    for N in (2, 4, 8):
        for beta in (2.5, 3.0, 4.0, 5.0):
            for B in range(21):
                assert an.mrt_rate_lower(SystemParams(N, beta, B)) <= an.mrt_rate(SystemParams(N, beta, B))
                p = SystemParams(N, beta, B, mode=Mode.ZF)
                assert an.zf_rate_lower(p) <= an.zf_rate(p)


@pytest.mark.criterion(C8, "sandwich, bounds, density invariance, distribution identities, ICI mean")
def test_criterion_8_density_invariance():
    for mode in (Mode.MRT, Mode.ZF):
        a = SystemParams(4, 4.0, 6, mode=mode, lambda_bs=1e-5 / math.pi)
        b = SystemParams(4, 4.0, 6, mode=mode, lambda_bs=1e-4 / math.pi)
        assert an.rate(a) == an.rate(b)
        assert an.ccdf((0.1, 1.0, 10.0), a) == an.ccdf((0.1, 1.0, 10.0), b)
        _, (lo_a, hi_a) = sim.estimate_rate(sim.run_sir_batch(a, 5000, sim.Quantizer.RVQ, 1))
        _, (lo_b, hi_b) = sim.estimate_rate(sim.run_sir_batch(b, 5000, sim.Quantizer.RVQ, 2))
        assert lo_a <= hi_b and lo_b <= hi_a


@pytest.mark.criterion(C8, "sandwich, bounds, density invariance, distribution identities, ICI mean")
def test_criterion_8_gamma_times_beta_is_exponential():
    rng = np.random.default_rng(SEED)
    N = 4
    x = rng.standard_gamma(N, 100_000) * rng.beta(1, N - 1, 100_000)
    assert stats.kstest(x, stats.expon.cdf).pvalue > 0.01


@pytest.mark.criterion(C8, "sandwich, bounds, density invariance, distribution identities, ICI mean")
def test_criterion_8_quantization_error_inverse_transform():
    N, B = 4, 6
    H = sim.complex_gaussian(np.random.default_rng(SEED), (100_000, N))
    h_dir = H / np.linalg.norm(H, axis=1, keepdims=True)
    sin2 = 1.0 - sim.inner_gain(h_dir, sim.quantize_scvq_batch(H, B, np.random.default_rng(SEED + 1)))
    d = an.delta_of(N, B)
    assert stats.kstest(sin2, lambda v: np.clip(v / d, 0.0, 1.0) ** (N - 1)).pvalue > 0.01


@pytest.mark.criterion(C8, "sandwich, bounds, density invariance, distribution identities, ICI mean")
def test_criterion_8_normalized_ici_mean():
    ici, _, _ = sim.sample_normalized_ici(
        100_000, LAM, 4.0, sim._exp_gains, np.random.default_rng(SEED), np.random.default_rng(SEED + 1)
    )
    se = ici.std(ddof=1) / math.sqrt(ici.size)
    assert abs(ici.mean() - 1.0) < 3.0 * se


# ---------------------------------------------------------------- criterion 9


@pytest.mark.criterion(C9, "golden values and Pfaff consistency")
def test_criterion_9_golden_values():
    assert gauss_2f1(1, 1, 2, -1) == pytest.approx(math.log(2.0), rel=1e-10)
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert gamma_fn(-0.5) == pytest.approx(-2.0 * math.sqrt(math.pi), rel=1e-12)
    assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-12)
    assert digamma(4.0) == pytest.approx(-0.5772156649015329 + 1 + 1 / 2 + 1 / 3, abs=1e-12)
    assert digamma(2.0) == pytest.approx(digamma(1.0) + 1.0, abs=1e-12)


@pytest.mark.criterion(C9, "golden values and Pfaff consistency")
def test_criterion_9_pfaff():
    rng = np.random.default_rng(SEED)
    for _ in range(500):
        a, b, c = rng.uniform(0.2, 6.0), rng.uniform(-0.9, 2.0), rng.uniform(0.15, 6.0)
        z = -rng.uniform(0.0, 50.0)
        transformed = (1.0 - z) ** (-a) * gauss_2f1(a, c - b, c, z / (z - 1.0))
        assert gauss_2f1(a, b, c, z) == pytest.approx(transformed, rel=1e-9)
