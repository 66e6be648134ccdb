"""Statistical helpers and the reduced randomness/quality suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import PinDerivationError
from .key_extraction import Key, enroll_key, hamming_distance, reproduce_keys
from .puf_model import (
    DEFAULT_N_IN,
    DEFAULT_N_OUT,
    P_DEF,
    NoiseModel,
    TokenDisorder,
    interrogate,
    interrogate_many,
    random_params,
    speckle_correlation,
)

# two-sided tail probability of a 3-sigma normal deviation
THREE_SIGMA_ALPHA = 2.0 * sps.norm.sf(3.0)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    ci = sps.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def binomial_interval(trials: int, p: float, confidence: float = 0.95) -> tuple[int, int]:
    """Central interval of success counts for Binomial(trials, p)."""
    lo, hi = sps.binom.interval(confidence, trials, p)
    return int(lo), int(hi)


def chisquare_uniform(values: np.ndarray, n_buckets: int, n_values: int) -> float:
    """p-value of a chi-square test that ``values`` (in [0, n_values)) spread evenly over buckets."""
    buckets = (np.asarray(values) * n_buckets) // n_values
    counts = np.bincount(buckets, minlength=n_buckets)
    return float(sps.chisquare(counts).pvalue)


def bit_frequency_findings(vectors: np.ndarray, family_alpha: float = THREE_SIGMA_ALPHA) -> list[tuple[int, float]]:
    """Bit positions whose frequency of ones deviates from 1/2.

    The per-bit threshold is Bonferroni-corrected so the chance of any false
    alarm over all positions equals ``family_alpha`` (a 3-sigma event by default).
    """
    vectors = np.asarray(vectors)
    if vectors.size == 0:
        return []
    m, n = vectors.shape
    z_crit = sps.norm.isf(family_alpha / (2 * n))
    z = (vectors.sum(axis=0) - m / 2) / math.sqrt(m / 4)
    return [(int(i), float(z[i])) for i in np.flatnonzero(np.abs(z) > z_crit)]


def contrast_tolerance(n_out: int) -> float:
    """Half-width of the accepted contrast band around 1.

    0.05 at 4096 pixels; for smaller patterns it grows like the standard error
    of the sample contrast, ``0.05 * sqrt(4096 / n_out)``.
    """
    return 0.05 * math.sqrt(max(1.0, DEFAULT_N_OUT / n_out))


@dataclass
class CheckResult:
    name: str
    value: float
    lo: float
    hi: float
    detail: str = ""
    skipped: bool = False

    @property
    def passed(self) -> bool:
        return self.skipped or (self.lo <= self.value <= self.hi)

    @property
    def status(self) -> str:
        return "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")


@dataclass
class SuiteConfig:
    n: int = 128
    sigma: float = 0.02
    n_in: int = DEFAULT_N_IN
    n_out: int = DEFAULT_N_OUT
    tokens: int = 100
    pin_tokens: int = 10_000
    stability_trials: int = 1000
    seed: int = 0


@dataclass
class SuiteData:
    """Raw samples behind the checks, kept for plotting."""

    example_pattern: np.ndarray | None = None
    contrasts: list[float] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)
    pins: list[int] = field(default_factory=list)
    key_matrix: np.ndarray | None = None


def _tokens(rng: np.random.Generator, count: int, cfg: SuiteConfig) -> list[TokenDisorder]:
    return [TokenDisorder.random(rng, n_in=cfg.n_in, n_out=cfg.n_out) for _ in range(count)]


def run_suite(cfg: SuiteConfig) -> tuple[list[CheckResult], SuiteData]:
    """Reduced statistical suite: speckle contrast, key balance and stability, distances, PINs."""
    from .enrollment import PIN_KEY_BITS, enroll_stage_e1

    rng = np.random.default_rng(cfg.seed)
    data = SuiteData()
    results: list[CheckResult] = []
    tokens = _tokens(rng, cfg.tokens, cfg)

    patterns = [interrogate(t, P_DEF) for t in tokens]
    data.example_pattern = np.asarray(patterns[0].intensities)
    data.contrasts = [p.contrast for p in patterns]
    tol = contrast_tolerance(cfg.n_out)
    results.append(CheckResult("speckle_contrast", float(np.mean(data.contrasts)), 1 - tol, 1 + tol,
                               f"mean std/mean over {len(patterns)} noiseless patterns"))

    cross = [abs(speckle_correlation(a, b)) for a, b in zip(patterns[::2], patterns[1::2])]
    results.append(CheckResult("cross_token_correlation", float(np.mean(cross)), 0.0, 0.05,
                               f"mean |rho| over {len(cross)} token pairs"))

    if 6 * cfg.n > cfg.n_out:
        for name in ("key_balance", "inter_token_distance", "key_stability"):
            results.append(CheckResult(name, float("nan"), 0, 0, f"n={cfg.n} needs {6 * cfg.n} pixels", skipped=True))
    else:
        keys: list[Key] = []
        helpers = []
        for t in tokens:
            k, h = enroll_key(interrogate(t, P_DEF), cfg.n)
            keys.append(k)
            helpers.append(h)
        mat = np.array([k.array for k in keys])
        data.key_matrix = mat
        results.append(CheckResult("key_balance", float(mat.mean()), 0.48, 0.52,
                                   f"fraction of ones over {len(keys)} {cfg.n}-bit keys"))
        data.distances = [hamming_distance(a, b) / cfg.n for a, b in zip(keys[::2], keys[1::2])]
        results.append(CheckResult("inter_token_distance", float(np.mean(data.distances)), 0.48, 0.52,
                                   f"mean fractional Hamming distance over {len(data.distances)} pairs"))

        noise = NoiseModel(cfg.sigma, int(rng.integers(2**63)))
        per_token = max(1, cfg.stability_trials // len(tokens))
        equal = total = 0
        for t, k, h in zip(tokens, keys, helpers):
            batch = interrogate_many(t, P_DEF, noise, per_token)
            equal += int(np.all(reproduce_keys(batch, h) == k.array, axis=1).sum())
            total += per_token
        results.append(CheckResult("key_stability", equal / total, 0.999, 1.0,
                                   f"noisy re-reads equal to enrolled key at sigma={cfg.sigma}, {total} trials"))

    if 6 * PIN_KEY_BITS > cfg.n_out:
        results.append(CheckResult("pin_uniformity", float("nan"), 0, 0,
                                   f"PIN key needs {6 * PIN_KEY_BITS} pixels", skipped=True))
    else:
        pins, failures = [], 0
        for t in _tokens(rng, cfg.pin_tokens, cfg):
            try:
                pins.append(enroll_stage_e1(t)[0].value)
            except PinDerivationError:
                failures += 1
        data.pins = pins
        p = chisquare_uniform(np.array(pins), 100, 10_000)
        results.append(CheckResult("pin_uniformity", p, 0.01, 1.0,
                                   f"chi-square p-value, {len(pins)} PINs in 100 buckets, {failures} derivation failures"))
    return results, data


def cross_challenge_correlations(token: TokenDisorder, pairs: int, rng: np.random.Generator) -> np.ndarray:
    """|rho| between the speckles of independent random challenges on one token."""
    out = []
    for _ in range(pairs):
        a, b = random_params(rng), random_params(rng)
        out.append(abs(speckle_correlation(interrogate(token, a), interrogate(token, b))))
    return np.array(out)

