"""Overlap metrics and the two-sample Kolmogorov-Smirnov test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class DiceReport:
    volume_dice: float
    slice_dice: tuple

    @property
    def mean_slice_dice(self) -> float:
        return float(np.mean(self.slice_dice)) if self.slice_dice else float("nan")


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n1: int
    n2: int

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)


def _masks(a, b):
    a = a.mask() if isinstance(a, Volume) else np.asarray(a, dtype=bool)
    b = b.mask() if isinstance(b, Volume) else np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"dims mismatch: {a.shape} vs {b.shape}")
    return a, b


def _dice(a: np.ndarray, b: np.ndarray) -> float:
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def dice(a, b) -> float:
    """Dice overlap; two empty masks agree perfectly (1.0)."""
    return _dice(*_masks(a, b))


def slicewise_dice(a, b, axis: str = "z") -> list[float]:
    """Per-slice dice along ``axis``, skipping slices empty in both masks."""
    a, b = _masks(a, b)
    ax = AXES[axis]
    a = np.moveaxis(a, ax, 0)
    b = np.moveaxis(b, ax, 0)
    return [_dice(sa, sb) for sa, sb in zip(a, b) if sa.any() or sb.any()]


def dice_report(pred, gt, axis: str = "z") -> DiceReport:
    return DiceReport(dice(pred, gt), tuple(slicewise_dice(pred, gt, axis)))


def ks_statistic(sample1, sample2) -> float:
    """sup |F1 - F2| over the pooled sample points."""
    x1 = np.sort(np.asarray(sample1, dtype=np.float64))
    x2 = np.sort(np.asarray(sample2, dtype=np.float64))
    pooled = np.concatenate([x1, x2])
    f1 = np.searchsorted(x1, pooled, side="right") / x1.size
    f2 = np.searchsorted(x2, pooled, side="right") / x2.size
    return float(np.max(np.abs(f1 - f2)))


def kolmogorov_sf(lam: float, tol: float = 1e-12) -> float:
    """Q(lam) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lam^2), clipped to [0, 1]."""
    if lam <= 0:
        return 1.0
    total, j = 0.0, 1
    while True:
        term = np.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < tol:
            break
        j += 1
    return float(min(1.0, max(0.0, 2.0 * total)))


def ks_test(sample1, sample2) -> KsResult:
    """Two-sample KS test with the asymptotic p-value.

    The asymptotic distribution is poor for fewer than ~25 points per sample.
    """
    n1, n2 = len(sample1), len(sample2)
    if n1 == 0 or n2 == 0:
        raise ValueError("ks_test needs two non-empty samples")
    d = ks_statistic(sample1, sample2)
    lam = d * np.sqrt(n1 * n2 / (n1 + n2))
    return KsResult(d, kolmogorov_sf(lam), n1, n2)


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def relative_improvement(gcn_dsc: float, expectation_dsc: float) -> float:
    """Percentage change of the refined dice over the expectation dice."""
    if expectation_dsc == 0:
        raise ZeroDivisionError("expectation dice is zero")
    return (gcn_dsc - expectation_dsc) / expectation_dsc * 100.0
