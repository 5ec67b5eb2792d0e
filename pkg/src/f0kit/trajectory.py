"""Log-F0 trajectories: interpolation, deltas, speaker statistics, rescaling
and synthetic injection curves.

All logarithms are natural. A :class:`LogF0Track` is gap-free: every frame
holds a finite log-Hz value inside ``[ln 20, ln 2000]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import AllUnvoiced, OutOfSanityBounds, TooShort
from .pitch import F0Track

LOG_MIN = math.log(20.0)
LOG_MAX = math.log(2000.0)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LogF0Track:
    hop_s: float
    values_log: np.ndarray
    voiced_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values_log, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("values_log must be 1-D")
        if self.voiced_mask is None:
            mask = np.ones(values.shape, dtype=bool)
        else:
            mask = np.array(self.voiced_mask, dtype=bool)
        if mask.shape != values.shape:
            raise ValueError("voiced_mask must match values_log in length")
        if self.hop_s <= 0:
            raise ValueError(f"hop_s must be positive, got {self.hop_s}")
        if not np.all(np.isfinite(values)):
            raise OutOfSanityBounds("log-F0 values must be finite")
        if values.size and (values.min() < LOG_MIN or values.max() > LOG_MAX):
            raise OutOfSanityBounds(
                "log-F0 values outside [ln 20, ln 2000]",
                min_hz=float(np.exp(values.min())),
                max_hz=float(np.exp(values.max())),
            )
        object.__setattr__(self, "values_log", _frozen(values))
        object.__setattr__(self, "voiced_mask", _frozen(mask))

    def __len__(self) -> int:
        return self.values_log.size

    def __eq__(self, other):
        if not isinstance(other, LogF0Track):
            return NotImplemented
        return (
            self.hop_s == other.hop_s
            and np.array_equal(self.values_log, other.values_log)
            and np.array_equal(self.voiced_mask, other.voiced_mask)
        )

    __hash__ = None

    @property
    def values_hz(self) -> np.ndarray:
        return np.exp(self.values_log)


@dataclass(frozen=True)
class DeltaTrack:
    hop_s: float
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SpeakerStats:
    """Linear-Hz F0 statistics pooled over a speaker's voiced frames."""

    mean_hz: float
    variance_hz2: float
    n_frames: int

    def __post_init__(self):
        if not self.mean_hz > 0:
            raise ValueError(f"mean_hz must be positive, got {self.mean_hz}")
        if self.variance_hz2 < 0:
            raise ValueError(f"variance_hz2 must be non-negative, got {self.variance_hz2}")
        if self.n_frames <= 0:
            raise ValueError(f"n_frames must be positive, got {self.n_frames}")


def interpolate(track: F0Track) -> LogF0Track:
    """Fill unvoiced frames by linear interpolation of log-F0.

    Interior unvoiced runs are interpolated between the flanking voiced
    frames; runs at either edge copy the nearest voiced value.

    Raises:
        AllUnvoiced: the track has no voiced frame.
    """
    voiced = track.voiced
    idx = np.flatnonzero(voiced)
    if idx.size == 0:
        raise AllUnvoiced("cannot interpolate a track with no voiced frames")
    n = len(track)
    logs = np.empty(n)
    logs[idx] = np.log(track.values_hz[idx])
    if idx.size == n:
        return LogF0Track(track.hop_s, logs, voiced)

    frames_ = np.arange(n)
    # index of the last voiced frame at or before i, and the first at or after i
    left = np.maximum.accumulate(np.where(voiced, frames_, -1))
    right = np.minimum.accumulate(np.where(voiced, frames_, n)[::-1])[::-1]
    left = np.where(left < 0, right, left)
    right = np.where(right >= n, left, right)

    lo_val, hi_val = logs[left], logs[right]
    span = right - left
    t = np.divide(frames_ - left, span, out=np.zeros(n), where=span > 0)
    filled = lo_val + t * (hi_val - lo_val)
    # guard against round-off overshoot beyond the flanks
    filled = np.clip(filled, np.minimum(lo_val, hi_val), np.maximum(lo_val, hi_val))
    logs[~voiced] = filled[~voiced]
    return LogF0Track(track.hop_s, logs, voiced)


def delta(track: LogF0Track) -> DeltaTrack:
    """Forward difference of log-F0, length N - 1."""
    if len(track) < 2:
        raise TooShort("delta needs at least two frames", n_frames=len(track))
    return DeltaTrack(track.hop_s, _frozen(np.diff(track.values_log)))


def speaker_stats(tracks: Iterable[F0Track]) -> SpeakerStats:
    """Mean and population variance of voiced linear-Hz values, pooled."""
    pooled = [t.values_hz[t.voiced] for t in tracks]
    values = np.concatenate(pooled) if pooled else np.empty(0)
    if values.size == 0:
        raise AllUnvoiced("no voiced frames across the given tracks")
    return SpeakerStats(float(values.mean()), float(values.var()), int(values.size))


def rescale_to_target(
    track: LogF0Track, source: SpeakerStats, target: SpeakerStats
) -> LogF0Track:
    """Shift log-F0 so the source speaker mean maps onto the target mean."""
    shift = math.log(target.mean_hz) - math.log(source.mean_hz)
    return LogF0Track(track.hop_s, track.values_log + shift, track.voiced_mask)


def _check_len(n_frames: int) -> None:
    if n_frames < 2:
        raise TooShort("generated trajectories need at least two frames", n_frames=n_frames)


def gen_flat(n_frames: int, hop_s: float, level_log: float) -> LogF0Track:
    _check_len(n_frames)
    return LogF0Track(hop_s, np.full(n_frames, float(level_log)))


def gen_sine(
    n_frames: int,
    hop_s: float,
    center_log: float,
    amplitude_log: float,
    period_frames: float,
) -> LogF0Track:
    """``center + amplitude * sin(2 pi i / period)`` for frame index ``i``."""
    _check_len(n_frames)
    if period_frames <= 0:
        raise ValueError(f"period_frames must be positive, got {period_frames}")
    i = np.arange(n_frames)
    values = center_log + amplitude_log * np.sin(2.0 * np.pi * i / period_frames)
    return LogF0Track(hop_s, values)


def gen_linear(n_frames: int, hop_s: float, start_log: float, end_log: float) -> LogF0Track:
    """Affine ramp from ``start_log`` at frame 0 to ``end_log`` at frame n - 1."""
    _check_len(n_frames)
    t = np.arange(n_frames) / (n_frames - 1)
    values = start_log + t * (end_log - start_log)
    values[-1] = end_log
    return LogF0Track(hop_s, values)
