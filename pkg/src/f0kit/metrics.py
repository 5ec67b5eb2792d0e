"""Objective F0 metrics: RMSE, Pearson correlation and histogram KLD."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BadRange, BinMismatch, EmptyInput, HopMismatch, LengthMismatch, TooShort
from .trajectory import LogF0Track

DEFAULT_BINS = 50
DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True)
class ComparisonReport:
    rmse_hz: float
    rmse_log: float
    correlation: Optional[float]
    n_frames: int

    def as_dict(self) -> dict:
        return {
            "rmse_hz": self.rmse_hz,
            "rmse_log": self.rmse_log,
            "correlation": self.correlation,
            "n_frames": self.n_frames,
        }


@dataclass(frozen=True)
class F0Distribution:
    bin_edges: np.ndarray
    probs: np.ndarray
    epsilon: float

    @property
    def n_bins(self) -> int:
        return self.probs.size


def _paired(a: LogF0Track, b: LogF0Track, min_len: int) -> tuple[np.ndarray, np.ndarray]:
    if len(a) != len(b):
        raise LengthMismatch("tracks differ in length", len_a=len(a), len_b=len(b))
    if a.hop_s != b.hop_s:
        raise HopMismatch("tracks differ in hop", hop_a=a.hop_s, hop_b=b.hop_s)
    if len(a) < min_len:
        raise TooShort(f"need at least {min_len} frames", n_frames=len(a))
    return a.values_log, b.values_log


def rmse(a: LogF0Track, b: LogF0Track) -> ComparisonReport:
    """RMSE in log-Hz and in linear Hz; ``correlation`` is left as None."""
    x, y = _paired(a, b, 1)
    rmse_log = math.sqrt(np.mean((x - y) ** 2))
    rmse_hz = math.sqrt(np.mean((np.exp(x) - np.exp(y)) ** 2))
    return ComparisonReport(rmse_hz, rmse_log, None, x.size)


def _is_constant(x: np.ndarray) -> bool:
    return bool(np.all(x == x[0]))


def pearson(a: LogF0Track, b: LogF0Track) -> float:
    """Pearson correlation of log values.

    A constant series has no defined correlation; 0.0 is returned, which is
    what a flat injected trajectory is expected to score.
    """
    x, y = _paired(a, b, 2)
    if _is_constant(x) or _is_constant(y):
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        return 0.0
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))


def compare(a: LogF0Track, b: LogF0Track) -> ComparisonReport:
    report = rmse(a, b)
    corr = pearson(a, b) if len(a) >= 2 else None
    return ComparisonReport(report.rmse_hz, report.rmse_log, corr, report.n_frames)


def build_distribution(
    values: Sequence[float],
    bins: int = DEFAULT_BINS,
    range: tuple[float, float] | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> F0Distribution:
    """Histogram ``values`` into ``bins`` uniform half-open bins on ``range``.

    Values outside the range are clamped into the edge bins; the last bin
    also includes its upper edge. Every bin receives ``epsilon`` extra count
    before normalization so no probability is zero.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInput("cannot build a distribution from no values")
    if range is None:
        range = (float(values.min()), float(values.max()))
    lo, hi = float(range[0]), float(range[1])
    if bins < 2 or not lo < hi or not (math.isfinite(lo) and math.isfinite(hi)):
        raise BadRange("require bins >= 2 and finite lo < hi", bins=bins, lo=lo, hi=hi)
    if not epsilon > 0:
        raise BadRange("epsilon must be positive", epsilon=epsilon)
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    probs = (counts + epsilon) / (values.size + bins * epsilon)
    return F0Distribution(edges, probs, float(epsilon))


def reference_range(values: Sequence[float]) -> tuple[float, float]:
    """Shared histogram range spanning ``values``; widened if degenerate."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("reference sample is empty")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        pad = max(abs(lo) * 1e-6, 1e-6)
        lo, hi = lo - pad, hi + pad
    return lo, hi


def kld(p: F0Distribution, q: F0Distribution) -> float:
    """KL(p || q) in nats."""
    if p.bin_edges.shape != q.bin_edges.shape or not np.array_equal(p.bin_edges, q.bin_edges):
        raise BinMismatch("distributions use different bin edges")
    return float(np.sum(p.probs * np.log(p.probs / q.probs)))
