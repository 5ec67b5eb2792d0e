"""Corpus-level operations shared by the CLI: batch extraction, training
pair assembly, prediction, and directory-to-directory reports."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .audio_io import load_wav, num_frames
from .corpus import Corpus, Track, load_track, save_track
from .errors import AllUnvoiced, EmptyCorpus, EmptyInput, IdMismatch, LengthMismatch, TooShort
from .pitch import F0Track, PitchConfig, extract_f0
from .predictor import PredictorModel, TrainingPair, featurize, predict
from .trajectory import LogF0Track, SpeakerStats, delta, interpolate, speaker_stats

log = logging.getLogger(__name__)

TRACK_SUFFIX = ".f0.json"


def track_path(directory, utt_id: str) -> Path:
    return Path(directory) / f"{utt_id}{TRACK_SUFFIX}"


def list_tracks(directory) -> dict[str, Path]:
    """Map utterance id -> track file for every ``*.f0.json`` in ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyInput(f"not a directory: {directory}", path=str(directory))
    return {
        p.name[: -len(TRACK_SUFFIX)]: p
        for p in sorted(directory.iterdir())
        if p.name.endswith(TRACK_SUFFIX)
    }


def as_log_track(track: Track) -> LogF0Track:
    """Interpolated log-F0 for raw tracks; log tracks pass through."""
    return track if isinstance(track, LogF0Track) else interpolate(track)


def as_f0_track(track: Track) -> F0Track:
    if isinstance(track, F0Track):
        return track
    return F0Track(track.hop_s, np.where(track.voiced_mask, track.values_hz, 0.0), track.voiced_mask)


# ---------------------------------------------------------------------------
# extraction


def extract_corpus(corpus: Corpus, cfg: PitchConfig, out_dir) -> dict:
    """Extract and save one raw F0 track per utterance; return a summary."""
    if len(corpus) == 0:
        raise EmptyCorpus("manifest lists no utterances")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_speaker: dict[str, list[F0Track]] = {}
    utterances = {}
    for utt in corpus:
        track = extract_f0(load_wav(utt.audio_path), cfg)
        save_track(track_path(out_dir, utt.id), track)
        per_speaker.setdefault(utt.speaker_id, []).append(track)
        utterances[utt.id] = {
            "speaker": utt.speaker_id,
            "n_frames": len(track),
            "n_voiced": int(track.voiced.sum()),
        }
        log.debug("extracted %s: %d frames", utt.id, len(track))
    speakers = {}
    for spk in sorted(per_speaker):
        entry = {
            "role": corpus.speakers[spk],
            "n_voiced": int(sum(t.voiced.sum() for t in per_speaker[spk])),
        }
        if entry["n_voiced"]:
            st = speaker_stats(per_speaker[spk])
            entry.update(mean_hz=st.mean_hz, variance_hz2=st.variance_hz2)
        speakers[spk] = entry
    return {
        "hop_s": cfg.hop_s,
        "window_s": cfg.effective_window_s,
        "utterances": utterances,
        "speakers": speakers,
    }


def stats_for_dir(track_dir) -> SpeakerStats:
    tracks = [as_f0_track(load_track(p)) for p in list_tracks(track_dir).values()]
    if not tracks:
        raise EmptyInput(f"no track files in {track_dir}", path=str(track_dir))
    return speaker_stats(tracks)


# ---------------------------------------------------------------------------
# predictor plumbing


@dataclass(frozen=True)
class FrameGrid:
    """Frame timing shared by extracted F0 and predictor features."""

    hop_s: float
    window_s: float

    @property
    def offset_s(self) -> float:
        # extracted frame k covers [k*hop, k*hop + window); its centre is the reference time
        return self.window_s / 2.0

    @classmethod
    def from_pitch(cls, cfg: PitchConfig) -> "FrameGrid":
        return cls(cfg.hop_s, cfg.effective_window_s)

    def n_frames_for(self, audio_path) -> int:
        clip = load_wav(audio_path)
        return num_frames(clip.samples.size, clip.sample_rate, self.hop_s, self.window_s)


def corpus_vocabulary(corpus: Corpus) -> tuple[list[str], list[str]]:
    phones = sorted({p.symbol for utt in corpus for p in utt.phones})
    return phones, sorted(corpus.speakers)


def training_pairs(
    corpus: Corpus,
    cfg: PitchConfig,
    inventory: Sequence[str],
    speakers: Sequence[str],
    tracks_dir=None,
) -> list[TrainingPair]:
    """Featurize every utterance against its interpolated log-F0 oracle.

    Oracles come from ``tracks_dir`` when given (``<id>.f0.json``), otherwise
    they are extracted from the audio with ``cfg``. Utterances with no voiced
    frame are skipped with a warning.
    """
    grid = FrameGrid.from_pitch(cfg)
    spk_index = {s: i for i, s in enumerate(speakers)}
    pairs = []
    for utt in corpus:
        if tracks_dir is not None:
            raw = load_track(track_path(tracks_dir, utt.id))
        else:
            raw = extract_f0(load_wav(utt.audio_path), cfg)
        try:
            oracle = as_log_track(raw)
        except AllUnvoiced as exc:
            log.warning("skipping %s: %s", utt.id, exc)
            continue
        feats = featurize(
            utt,
            grid.hop_s,
            inventory,
            spk_index[utt.speaker_id],
            len(speakers),
            n_frames=len(oracle),
            offset_s=grid.offset_s,
        )
        pairs.append(
            TrainingPair(feats, oracle, corpus.speakers[utt.speaker_id] == "target", utt.id)
        )
    return pairs


def predict_corpus(model: PredictorModel, corpus: Corpus, out_dir, speaker: str | None = None) -> dict:
    """Predict one log-F0 track per utterance on the model's frame grid."""
    meta = model.metadata
    grid = FrameGrid(meta["hop_s"], meta["window_s"])
    speakers = meta["speakers"]
    if speaker is None:
        speaker = (meta.get("target_speakers") or speakers)[0]
    if speaker not in speakers:
        raise IdMismatch(f"speaker {speaker!r} unknown to the model", speaker=speaker)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lengths = {}
    for utt in corpus:
        feats = featurize(
            utt,
            grid.hop_s,
            meta["inventory"],
            speakers.index(speaker),
            len(speakers),
            n_frames=grid.n_frames_for(utt.audio_path),
            offset_s=grid.offset_s,
        )
        track = predict(model, feats)
        save_track(track_path(out_dir, utt.id), track)
        lengths[utt.id] = len(track)
    return {"speaker": speaker, "n_frames": lengths}


# ---------------------------------------------------------------------------
# reports


def _matched(dir_a, dir_b) -> list[tuple[str, Path, Path]]:
    a, b = list_tracks(dir_a), list_tracks(dir_b)
    only_a, only_b = sorted(set(a) - set(b)), sorted(set(b) - set(a))
    if only_a or only_b:
        raise IdMismatch(
            "track directories hold different utterance ids", only_a=only_a, only_b=only_b
        )
    if not a:
        raise EmptyInput(f"no track files in {dir_a}", path=str(dir_a))
    return [(k, a[k], b[k]) for k in sorted(a)]


def compare_dirs(dir_a, dir_b) -> dict:
    """Per-utterance RMSE/correlation rows plus corpus means."""
    rows = []
    for utt_id, pa, pb in _matched(dir_a, dir_b):
        a, b = as_log_track(load_track(pa)), as_log_track(load_track(pb))
        try:
            report = metrics.compare(a, b)
        except LengthMismatch as exc:
            exc.context["utterance"] = utt_id
            raise
        rows.append({"id": utt_id, **report.as_dict()})
    corrs = [r["correlation"] for r in rows if r["correlation"] is not None]
    mean = {
        "rmse_hz": float(np.mean([r["rmse_hz"] for r in rows])),
        "rmse_log": float(np.mean([r["rmse_log"] for r in rows])),
        "correlation": float(np.mean(corrs)) if corrs else None,
        "n_utterances": len(rows),
    }
    return {"rows": rows, "mean": mean}


def pooled_values(tracks: Iterable[LogF0Track]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated log-F0 values and per-track forward deltas."""
    values, deltas = [], []
    for t in tracks:
        values.append(t.values_log)
        try:
            deltas.append(delta(t).values)
        except TooShort:
            pass
    if not values:
        raise EmptyInput("no tracks to pool")
    return np.concatenate(values), np.concatenate(deltas) if deltas else np.empty(0)


def kld_table(
    target: Sequence[LogF0Track],
    systems: dict[str, Sequence[LogF0Track]],
    bins: int = metrics.DEFAULT_BINS,
    epsilon: float = metrics.DEFAULT_EPSILON,
) -> dict:
    """KL(target || system) over F0 and delta-F0 histograms.

    Bin edges span the target sample's range and are shared by all systems.
    """
    t_f0, t_delta = pooled_values(target)
    f0_range = metrics.reference_range(t_f0)
    delta_range = metrics.reference_range(t_delta)
    p_f0 = metrics.build_distribution(t_f0, bins, f0_range, epsilon)
    p_delta = metrics.build_distribution(t_delta, bins, delta_range, epsilon)
    rows = []
    for name, tracks in systems.items():
        s_f0, s_delta = pooled_values(tracks)
        rows.append({
            "system": name,
            "kld_f0": metrics.kld(p_f0, metrics.build_distribution(s_f0, bins, f0_range, epsilon)),
            "kld_delta": metrics.kld(
                p_delta, metrics.build_distribution(s_delta, bins, delta_range, epsilon)
            ),
        })
    return {
        "bins": bins,
        "epsilon": epsilon,
        "f0_range": list(f0_range),
        "delta_range": list(delta_range),
        "rows": rows,
    }


def load_log_tracks(directory) -> list[LogF0Track]:
    return [as_log_track(load_track(p)) for p in list_tracks(directory).values()]
