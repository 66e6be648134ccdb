import math

import numpy as np
import pytest
from scipy import stats as sps

from pufauth.stats import (
    THREE_SIGMA_ALPHA,
    SuiteConfig,
    binomial_interval,
    bit_frequency_findings,
    chisquare_uniform,
    contrast_tolerance,
    cross_challenge_correlations,
    run_suite,
    wilson_interval,
)


def _wilson_oracle(k, n, z=1.959963984540054):
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return centre - half, centre + half


@pytest.mark.parametrize("k,n", [(0, 100), (1, 10_000), (37, 100), (100, 100)])
def test_wilson_matches_closed_form(k, n):
    lo, hi = wilson_interval(k, n)
    olo, ohi = _wilson_oracle(k, n)
    assert lo == pytest.approx(max(0.0, olo), abs=1e-9)
    assert hi == pytest.approx(min(1.0, ohi), abs=1e-9)


def test_binomial_interval_covers_mean():
    lo, hi = binomial_interval(100_000, 2**-8)
    assert lo < 100_000 / 256 < hi
    assert sps.binom.cdf(hi, 100_000, 2**-8) >= 0.975


def test_chisquare_oracle(rng):
    vals = rng.integers(0, 10_000, 5000)
    counts = np.bincount(vals // 100, minlength=100)
    e = 50.0
    stat = float(((counts - e) ** 2 / e).sum())
    assert chisquare_uniform(vals, 100, 10_000) == pytest.approx(sps.chi2.sf(stat, 99))
    assert chisquare_uniform(np.full(5000, 17), 100, 10_000) < 1e-10


def test_bit_frequency_family_error(rng):
    assert THREE_SIGMA_ALPHA == pytest.approx(0.0026998, rel=1e-4)
    # false alarms across many clean audits stay near the family rate
    alarms = sum(bool(bit_frequency_findings(rng.integers(0, 2, (1000, 128)))) for _ in range(300))
    assert alarms <= 6
    biased = rng.integers(0, 2, (1000, 16))
    biased[:, 3] = rng.random(1000) < 0.6
    assert [b for b, _ in bit_frequency_findings(biased)] == [3]


def test_contrast_tolerance():
    assert contrast_tolerance(4096) == 0.05
    assert contrast_tolerance(1024) == pytest.approx(0.1)


def test_cross_challenge_correlation_small(token_pair, rng):
    r = cross_challenge_correlations(token_pair[0], 30, rng)
    assert r.mean() < 0.05


def test_reduced_suite_passes():
    results, data = run_suite(SuiteConfig(tokens=40, pin_tokens=500, stability_trials=200, seed=3))
    assert {r.name for r in results} == {
        "speckle_contrast", "cross_token_correlation", "key_balance",
        "inter_token_distance", "key_stability", "pin_uniformity",
    }
    assert all(r.passed for r in results), [(r.name, r.value) for r in results]
    assert len(data.pins) == 500 and data.key_matrix.shape == (40, 128)


def test_suite_skips_when_pattern_too_small():
    results, _ = run_suite(SuiteConfig(n=128, n_in=16, n_out=256, tokens=10, pin_tokens=10, seed=1))
    status = {r.name: r.status for r in results}
    assert status["key_balance"] == "SKIP" and status["pin_uniformity"] == "SKIP"
    assert status["speckle_contrast"] == "PASS"
