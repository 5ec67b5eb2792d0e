"""Mono PCM16 WAV loading and fixed-hop framing."""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidFraming, MalformedWav, UnsupportedFormat

PCM16_SCALE = 32768.0
DEFAULT_HOP_S = 0.005
DEFAULT_WINDOW_S = 0.025

# guards floor() against (1.0 - 0.025) / 0.005 == 194.99999999999997
_FRAME_EPS = 1e-9


@dataclass(frozen=True)
class AudioClip:
    """Immutable mono audio buffer with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise UnsupportedFormat("AudioClip must be mono (1-D samples)")
        if samples.size and (samples.min() < -1.0 or samples.max() > 1.0):
            raise ValueError("samples must lie within [-1.0, 1.0]")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield chunk_id, body, len(body) == size
        pos += 8 + size + (size & 1)


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE PCM16 mono file.

    Raises:
        MalformedWav: bad RIFF header, missing chunks or truncated data.
        UnsupportedFormat: format tag other than 1, sample width other than
            16 bits, or more than one channel.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav("not a RIFF/WAVE file", path=str(path))

    fmt = None
    pcm = None
    for chunk_id, body, complete in _iter_chunks(data):
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise MalformedWav("fmt chunk too short", path=str(path))
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if not complete:
                raise MalformedWav("data chunk truncated", path=str(path))
            pcm = body
            break
    if fmt is None:
        raise MalformedWav("missing fmt chunk", path=str(path))
    if pcm is None:
        raise MalformedWav("missing data chunk", path=str(path))

    format_tag, channels, sample_rate, _, block_align, bits = fmt
    if format_tag != 1:
        raise UnsupportedFormat(f"format tag {format_tag} is not PCM (1)", path=str(path))
    if channels != 1:
        raise UnsupportedFormat(f"{channels} channels; only mono is supported", path=str(path))
    if bits != 16 or block_align != 2:
        raise UnsupportedFormat(f"{bits}-bit samples; only PCM16 is supported", path=str(path))
    if sample_rate == 0:
        raise MalformedWav("sample rate is zero", path=str(path))
    if len(pcm) % 2:
        raise MalformedWav("odd number of bytes in PCM16 data", path=str(path))

    ints = np.frombuffer(pcm, dtype="<i2")
    return AudioClip(ints.astype(np.float64) / PCM16_SCALE, int(sample_rate))


def save_wav(path, clip: AudioClip) -> None:
    """Write ``clip`` as PCM16 mono. Values are scaled by 32768 and clipped."""
    ints = np.clip(np.round(clip.samples * PCM16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(ints.tobytes())


def wav_num_samples(path) -> tuple[int, int]:
    clip = load_wav(path)
    return clip.samples.size, clip.sample_rate


def num_frames(n_samples: int, sample_rate: int, hop_s: float, window_s: float) -> int:
    """Number of full windows: ``floor((duration - window) / hop) + 1``, or 0."""
    if hop_s <= 0 or window_s < hop_s:
        raise InvalidFraming(
            "require hop_s > 0 and window_s >= hop_s", hop_s=hop_s, window_s=window_s
        )
    duration = n_samples / sample_rate
    if duration + _FRAME_EPS < window_s:
        return 0
    count = math.floor((duration - window_s) / hop_s + _FRAME_EPS) + 1
    win = int(round(window_s * sample_rate))
    # sample rounding can push the last window past the end of the clip
    while count > 0 and int(round((count - 1) * hop_s * sample_rate)) + win > n_samples:
        count -= 1
    return count


def frame_starts(n_frames: int, sample_rate: int, hop_s: float) -> np.ndarray:
    return np.round(np.arange(n_frames) * hop_s * sample_rate).astype(np.int64)


def frames(
    clip: AudioClip, hop_s: float = DEFAULT_HOP_S, window_s: float = DEFAULT_WINDOW_S
) -> np.ndarray:
    """Slice ``clip`` into overlapping analysis windows.

    Frame ``k`` starts at sample ``round(k * hop_s * sample_rate)`` and spans
    ``round(window_s * sample_rate)`` samples.

    Returns:
        Array of shape ``(n_frames, window_samples)``; empty along the first
        axis when the clip is shorter than one window.
    """
    n = num_frames(clip.samples.size, clip.sample_rate, hop_s, window_s)
    win = int(round(window_s * clip.sample_rate))
    if n == 0:
        return np.empty((0, win))
    idx = frame_starts(n, clip.sample_rate, hop_s)[:, None] + np.arange(win)[None, :]
    return clip.samples[idx]
