"""Seeded synthetic data: test signals, toy phone corpora and F0 samples.

The toy corpus gives each phone a fixed log-F0 offset and each speaker a
base pitch, so a frame-level predictor has a learnable mapping. Phones in
``UNVOICED_PHONES`` are rendered as low-level noise.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, save_wav
from .corpus import Phone, Utterance, write_alignment, write_manifest
from .trajectory import LogF0Track

TOY_PHONES = ("a", "e", "i", "o", "u", "m", "n", "s")
UNVOICED_PHONES = frozenset({"s"})
# log-F0 offset per phone relative to the speaker base
PHONE_OFFSETS = {"a": 0.10, "e": 0.05, "i": 0.20, "o": -0.05, "u": -0.10,
                 "m": -0.15, "n": -0.08, "s": 0.0}


def sine(freq_hz: float, duration_s: float = 1.0, sample_rate: int = 16000,
         amplitude: float = 0.5, phase: float = 0.0) -> AudioClip:
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq_hz * t + phase), sample_rate)


def harmonic_signal(f0_per_sample: np.ndarray, sample_rate: int, n_harmonics: int = 4,
                    amplitude: float = 0.4) -> np.ndarray:
    """Phase-continuous harmonic tone following a per-sample F0 contour."""
    phase = 2 * np.pi * np.cumsum(f0_per_sample) / sample_rate
    weights = 1.0 / np.arange(1, n_harmonics + 1)
    out = sum(w * np.sin((k + 1) * phase) for k, w in enumerate(weights))
    return amplitude * out / weights.sum()


def random_phones(rng: np.random.Generator, n_phones: int, min_dur: float = 0.04,
                  max_dur: float = 0.12, inventory=TOY_PHONES) -> tuple[Phone, ...]:
    """Contiguous phone intervals starting at 0, times rounded to 1 ms."""
    phones = []
    t = 0.0
    for _ in range(n_phones):
        dur = round(float(rng.uniform(min_dur, max_dur)), 3)
        sym = str(inventory[rng.integers(len(inventory))])
        end = round(t + dur, 3)
        phones.append(Phone(sym, t, end))
        t = end
    return tuple(phones)


def phone_contour(phones, times: np.ndarray, base_log: float) -> np.ndarray:
    """Log-F0 at ``times``: base + phone offset + a gentle in-phone rise."""
    out = np.full(times.shape, base_log)
    for p in phones:
        sel = (times >= p.start_s) & (times < p.end_s)
        rel = (times[sel] - p.start_s) / (p.end_s - p.start_s)
        out[sel] += PHONE_OFFSETS.get(p.symbol, 0.0) + 0.05 * rel
    last = times >= phones[-1].end_s
    out[last] = out[~last][-1] if np.any(~last) else base_log
    return out


def toy_pair_data(rng: np.random.Generator, n_phones: int, base_hz: float,
                  hop_s: float = 0.005) -> tuple[tuple[Phone, ...], LogF0Track]:
    """Phones plus a frame-rate oracle log-F0 track (frame i at i * hop_s)."""
    phones = random_phones(rng, n_phones)
    n = math.ceil(phones[-1].end_s / hop_s - 1e-9)
    times = np.arange(n) * hop_s
    return phones, LogF0Track(hop_s, phone_contour(phones, times, math.log(base_hz)))


def toy_utterance(utt_id: str, phones, speaker: str = "tgt",
                  audio_path: str = "") -> Utterance:
    return Utterance(utt_id, Path(audio_path), speaker, tuple(phones))


def render_utterance(rng: np.random.Generator, phones, base_hz: float,
                     sample_rate: int = 16000, tail_s: float = 0.0) -> AudioClip:
    duration = phones[-1].end_s + tail_s
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = np.exp(phone_contour(phones, t, math.log(base_hz)))
    signal = harmonic_signal(f0, sample_rate)
    for p in phones:
        if p.symbol in UNVOICED_PHONES:
            sel = (t >= p.start_s) & (t < p.end_s)
            signal[sel] = rng.uniform(-0.05, 0.05, int(sel.sum()))
    return AudioClip(np.clip(signal, -1.0, 1.0), sample_rate)


def write_toy_corpus(out_dir, speakers: dict, utts_per_speaker: int = 3,
                     n_phones: int = 8, seed: int = 0, sample_rate: int = 16000) -> Path:
    """Write wavs, alignments, ``manifest.jsonl`` and ``speakers.json``.

    Args:
        speakers: ``{speaker_id: (role, base_hz)}``.

    Returns:
        Path of the manifest.
    """
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "align").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for spk, (role, base_hz) in speakers.items():
        for k in range(utts_per_speaker):
            utt_id = f"{spk}_{k:03d}"
            phones = random_phones(rng, n_phones)
            clip = render_utterance(rng, phones, base_hz, sample_rate, tail_s=0.02)
            save_wav(out_dir / "wav" / f"{utt_id}.wav", clip)
            write_alignment(out_dir / "align" / f"{utt_id}.tsv", phones)
            records.append({"id": utt_id, "audio": f"wav/{utt_id}.wav",
                            "speaker": spk, "alignment": f"align/{utt_id}.tsv"})
    manifest = out_dir / "manifest.jsonl"
    write_manifest(manifest, records, {s: r for s, (r, _) in speakers.items()})
    return manifest


def random_walk_tracks(rng: np.random.Generator, n_tracks: int, n_frames: int,
                       mean_hz: float, spread_log: float = 0.15, step_log: float = 0.02,
                       shift_hz: float = 0.0, hop_s: float = 0.005) -> list[LogF0Track]:
    """Smooth random log-F0 contours around ``mean_hz``.

    Each contour is a mean-reverting random walk in log space; ``shift_hz``
    adds a constant offset in linear Hz afterwards.
    """
    tracks = []
    centre = math.log(mean_hz)
    for _ in range(n_tracks):
        x = np.empty(n_frames)
        x[0] = centre + rng.normal(0.0, spread_log)
        for i in range(1, n_frames):
            x[i] = x[i - 1] + 0.05 * (centre - x[i - 1]) + rng.normal(0.0, step_log)
        hz = np.exp(x) + shift_hz
        tracks.append(LogF0Track(hop_s, np.log(hz)))
    return tracks
