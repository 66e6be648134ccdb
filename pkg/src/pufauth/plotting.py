"""Figures for the stats and attack reports.

Everything renders off-screen to PNG files; callers pass the output path.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy import stats as sps  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _figure(width: float = 4.0, ratio: float = (math.sqrt(5) - 1) / 2):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(width, width * ratio))
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        fig.savefig(path)
    plt.close(fig)
    return path


def speckle_image(intensities: np.ndarray, path) -> Path:
    x = np.asarray(intensities)
    side = int(math.isqrt(x.size))
    img = x.reshape(side, side) if side * side == x.size else x[None, :]
    fig, ax = _figure(3.2, 1.0)
    im = ax.imshow(img, cmap="inferno", interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title("speckle at default parameters")
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="I / <I>")
    return _save(fig, path)


def intensity_histogram(intensities: np.ndarray, path) -> Path:
    x = np.asarray(intensities)
    fig, ax = _figure()
    edges = np.linspace(0, max(6.0, float(np.quantile(x, 0.999))), 60)
    ax.hist(x, bins=edges, density=True, color="0.6", label="simulated")
    ax.plot(edges, np.exp(-edges), "k-", lw=1, label=r"$e^{-I}$")
    ax.set_yscale("log")
    ax.set_xlabel("normalized intensity")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    return _save(fig, path)


def pin_histogram(pins: Sequence[int], path, buckets: int = 100) -> Path:
    pins = np.asarray(pins)
    counts = np.bincount(pins * buckets // 10_000, minlength=buckets)
    fig, ax = _figure(5.0)
    ax.bar(np.arange(buckets), counts, width=1.0, color="0.55")
    expected = pins.size / buckets
    ax.axhline(expected, color="k", lw=0.8)
    ax.set_xlabel("PIN bucket (PIN // 100)")
    ax.set_ylabel("count")
    ax.set_title(f"{pins.size} PINs")
    return _save(fig, path)


def distance_histogram(distances: Sequence[float], n: int, path) -> Path:
    d = np.asarray(distances)
    fig, ax = _figure()
    k = np.arange(n + 1)
    ax.hist(d * n, bins=np.arange(n + 2) - 0.5, density=True, color="0.6", label="token pairs")
    ax.plot(k, sps.binom.pmf(k, n, 0.5), "k-", lw=1, label=f"Binomial({n}, 1/2)")
    ax.set_xlim(n * 0.25, n * 0.75)
    ax.set_xlabel("Hamming distance")
    ax.set_ylabel("probability")
    ax.legend(frameon=False)
    return _save(fig, path)


def attack_rates(rows: Sequence, path) -> Path:
    """Observed success rates with Wilson intervals against the expected rate."""
    fig, ax = _figure(5.0, 0.5)
    for i, s in enumerate(rows):
        lo, hi = s.wilson_interval
        rate = s.success_rate
        floor = 0.5 / s.trials
        ax.errorbar(i, max(rate, floor), yerr=[[max(rate, floor) - max(lo, floor)], [max(hi, floor) - max(rate, floor)]],
                    fmt="o", color="k", capsize=3)
        ax.plot([i - 0.3, i + 0.3], [s.expected_rate] * 2, color="tab:red", lw=1.2)
    ax.set_yscale("log")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([s.label or s.kind.value for s in rows], rotation=20, ha="right")
    ax.set_ylabel("success rate")
    return _save(fig, path)
