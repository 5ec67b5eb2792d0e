"""Frame-level F0 estimation with a YIN-style difference function.

For each analysis window the squared-difference function

    d(tau) = sum_j (x[j] - x[j + tau])**2,   j = 0 .. W - tau_max - 1

is computed with a fixed integration length, normalized by its cumulative
mean, and the first lag in ``[tau_min, tau_max]`` whose normalized value
drops below ``voicing_threshold`` selects the period. The lag is refined to
the bottom of that dip and then by parabolic interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioClip, frames
from .errors import ConfigOutOfRange

# windows whose energy is below this are treated as silence
_SILENCE_ENERGY = 1e-10


@dataclass(frozen=True)
class PitchConfig:
    fmin_hz: float = 50.0
    fmax_hz: float = 600.0
    hop_s: float = 0.005
    window_s: float = 0.025
    voicing_threshold: float = 0.1

    @property
    def effective_window_s(self) -> float:
        """Analysis window, widened to hold two periods at ``fmin_hz``."""
        return max(self.window_s, 2.0 / self.fmin_hz)

    def validate(self, sample_rate: int) -> None:
        if not 0 < self.fmin_hz < self.fmax_hz < sample_rate / 2:
            raise ConfigOutOfRange(
                "require 0 < fmin_hz < fmax_hz < sample_rate / 2",
                fmin_hz=self.fmin_hz,
                fmax_hz=self.fmax_hz,
                sample_rate=sample_rate,
            )
        if self.hop_s <= 0 or self.window_s <= 0:
            raise ConfigOutOfRange(
                "hop_s and window_s must be positive", hop_s=self.hop_s, window_s=self.window_s
            )
        if not 0 < self.voicing_threshold < 1:
            raise ConfigOutOfRange(
                "voicing_threshold must lie in (0, 1)", voicing_threshold=self.voicing_threshold
            )
        if self.effective_window_s < self.hop_s:
            raise ConfigOutOfRange("window shorter than hop", window_s=self.effective_window_s)


@dataclass(frozen=True)
class F0Track:
    """Per-frame linear-Hz F0 with voicing flags.

    ``values_hz`` is only meaningful where ``voiced`` is true; unvoiced
    frames hold 0.0.
    """

    hop_s: float
    values_hz: np.ndarray
    voiced: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values_hz, dtype=np.float64).copy()
        if self.voiced is None:
            voiced = values > 0
        else:
            voiced = np.asarray(self.voiced, dtype=bool).copy()
        if values.ndim != 1 or voiced.shape != values.shape:
            raise ValueError("values_hz and voiced must be 1-D and of equal length")
        if self.hop_s <= 0:
            raise ValueError(f"hop_s must be positive, got {self.hop_s}")
        values[~voiced] = 0.0
        if np.any(~(values[voiced] > 0)) or not np.all(np.isfinite(values)):
            raise ValueError("voiced frames must carry finite positive Hz values")
        values.flags.writeable = False
        voiced.flags.writeable = False
        object.__setattr__(self, "values_hz", values)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self) -> int:
        return self.values_hz.size

    def __eq__(self, other):
        if not isinstance(other, F0Track):
            return NotImplemented
        return (
            self.hop_s == other.hop_s
            and np.array_equal(self.voiced, other.voiced)
            and np.array_equal(self.values_hz, other.values_hz)
        )

    __hash__ = None


def _difference_function(windows: np.ndarray, tau_max: int) -> np.ndarray:
    """Squared difference for lags 0..tau_max with integration length W - tau_max."""
    n_frames, width = windows.shape
    span = width - tau_max
    d = np.zeros((n_frames, tau_max + 1))
    head = windows[:, :span]
    for tau in range(1, tau_max + 1):
        diff = head - windows[:, tau : tau + span]
        d[:, tau] = np.einsum("ij,ij->i", diff, diff)
    return d


def _cumulative_mean_normalize(d: np.ndarray) -> np.ndarray:
    cmnd = np.ones_like(d)
    running = np.cumsum(d[:, 1:], axis=1)
    taus = np.arange(1, d.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d[:, 1:] * taus / running
    cmnd[:, 1:] = np.where(running > 0, ratio, 1.0)
    return cmnd


def _pick_lag(row: np.ndarray, tau_min: int, tau_max: int, threshold: float) -> float | None:
    below = np.flatnonzero(row[tau_min : tau_max + 1] < threshold)
    if below.size == 0:
        return None
    tau = tau_min + int(below[0])
    while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
        tau += 1
    if tau_min < tau < tau_max:
        a, b, c = row[tau - 1], row[tau], row[tau + 1]
        denom = a - 2.0 * b + c
        if denom > 0:
            shift = 0.5 * (a - c) / denom
            if abs(shift) <= 1.0:
                return tau + shift
    return float(tau)


def extract_f0(clip: AudioClip, cfg: PitchConfig | None = None) -> F0Track:
    """Estimate F0 and voicing for every hop of ``clip``.

    Frame ``k`` analyses the window starting at ``k * hop_s``; its length is
    ``cfg.effective_window_s``. Voiced values are clamped to
    ``[fmin_hz, fmax_hz]``.
    """
    cfg = cfg or PitchConfig()
    cfg.validate(clip.sample_rate)
    sr = clip.sample_rate
    windows = frames(clip, cfg.hop_s, cfg.effective_window_s)
    n = windows.shape[0]
    values = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    if n == 0:
        return F0Track(cfg.hop_s, values, voiced)

    tau_min = max(1, int(math.floor(sr / cfg.fmax_hz)))
    tau_max = int(math.ceil(sr / cfg.fmin_hz))
    if tau_max >= windows.shape[1]:
        raise ConfigOutOfRange(
            "analysis window too short for fmin_hz", window_samples=windows.shape[1]
        )

    windows = windows - windows.mean(axis=1, keepdims=True)
    energy = np.einsum("ij,ij->i", windows, windows)
    cmnd = _cumulative_mean_normalize(_difference_function(windows, tau_max))

    for k in range(n):
        if energy[k] < _SILENCE_ENERGY:
            continue
        lag = _pick_lag(cmnd[k], tau_min, tau_max, cfg.voicing_threshold)
        if lag is None:
            continue
        values[k] = min(max(sr / lag, cfg.fmin_hz), cfg.fmax_hz)
        voiced[k] = True
    return F0Track(cfg.hop_s, values, voiced)
