"""Corpus manifests, phone alignments and F0 track files.

File formats (schema_version 1):

* manifest: JSON lines, one ``{"id", "audio", "speaker", "alignment"}``
  object per utterance; relative paths resolve against the manifest's
  directory.
* speaker roles: a JSON object ``{speaker_id: "target" | "supporting"}``,
  by default ``speakers.json`` next to the manifest.
* alignment: TSV with columns ``phone, start_s, end_s``; an optional header
  row starting with ``phone`` is skipped.
* track: JSON ``{"schema_version", "hop_s", "frames"}`` with ``null`` for
  unvoiced frames; log tracks add ``"log": true`` and ``"voiced_mask"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .errors import (
    InvalidAlignment,
    IoError,
    MissingAudio,
    ParseError,
    SchemaVersionMismatch,
)
from .pitch import F0Track
from .trajectory import LogF0Track, SpeakerStats

SCHEMA_VERSION = 1
ROLES = ("target", "supporting")
SPEAKERS_FILENAME = "speakers.json"

Track = Union[F0Track, LogF0Track]


class Phone(NamedTuple):
    symbol: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class Utterance:
    id: str
    audio_path: Path
    speaker_id: str
    phones: tuple[Phone, ...]

    @property
    def duration_s(self) -> float:
        return self.phones[-1].end_s if self.phones else 0.0


@dataclass(frozen=True)
class Corpus:
    utterances: tuple[Utterance, ...]
    speakers: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @property
    def target_speakers(self) -> list[str]:
        return sorted(s for s, role in self.speakers.items() if role == "target")

    def by_speaker(self) -> dict[str, list[Utterance]]:
        groups: dict[str, list[Utterance]] = {}
        for utt in self.utterances:
            groups.setdefault(utt.speaker_id, []).append(utt)
        return groups


def validate_phones(phones, utterance_id: str = "") -> tuple[Phone, ...]:
    """Check intervals are well-formed, ascending and non-overlapping."""
    prev_end = 0.0
    out = []
    for i, ph in enumerate(phones):
        ph = Phone(str(ph[0]), float(ph[1]), float(ph[2]))
        if ph.start_s < 0 or not ph.end_s > ph.start_s:
            raise InvalidAlignment(
                f"interval {i} ({ph.symbol}) has start {ph.start_s} / end {ph.end_s}",
                utterance=utterance_id,
                field="phones",
                index=i,
            )
        if i and ph.start_s < prev_end:
            raise InvalidAlignment(
                f"interval {i} ({ph.symbol}) overlaps or precedes the previous one",
                utterance=utterance_id,
                field="phones",
                index=i,
            )
        prev_end = ph.end_s
        out.append(ph)
    return tuple(out)


def read_alignment(path, utterance_id: str = "") -> tuple[Phone, ...]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(str(exc), utterance=utterance_id, field="alignment", path=str(path))
    phones = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        cols = line.rstrip("\n").split("\t")
        if lineno == 1 and cols[0].strip().lower() == "phone":
            continue
        if len(cols) != 3:
            raise ParseError(
                f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}",
                utterance=utterance_id,
                field="alignment",
                line=lineno,
            )
        try:
            phones.append(Phone(cols[0].strip(), float(cols[1]), float(cols[2])))
        except ValueError:
            raise ParseError(
                f"{path}:{lineno}: non-numeric time",
                utterance=utterance_id,
                field="alignment",
                line=lineno,
            )
    return validate_phones(phones, utterance_id)


def write_alignment(path, phones) -> None:
    lines = ["phone\tstart_s\tend_s"]
    lines += [f"{p[0]}\t{p[1]:.6f}\t{p[2]:.6f}" for p in phones]
    Path(path).write_text("\n".join(lines) + "\n")


def load_speakers(path) -> dict:
    path = Path(path)
    try:
        roles = json.loads(path.read_text())
    except OSError as exc:
        raise IoError(str(exc), field="speakers", path=str(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}", field="speakers")
    if not isinstance(roles, dict):
        raise ParseError(f"{path}: expected a JSON object of speaker roles", field="speakers")
    for spk, role in roles.items():
        if role not in ROLES:
            raise ParseError(
                f"speaker {spk!r} has role {role!r}; expected one of {ROLES}",
                field="speakers",
                speaker=spk,
            )
    return dict(roles)


def load_manifest(path, speakers_path=None) -> Corpus:
    """Parse and validate a JSON-lines manifest.

    Alignments are read eagerly; audio files are only checked for existence.
    Utterance order follows the file.
    """
    path = Path(path)
    base = path.parent
    speakers = load_speakers(speakers_path or base / SPEAKERS_FILENAME)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(str(exc), field="manifest", path=str(path))

    seen: set[str] = set()
    utterances = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: {exc.msg}", line=lineno)
        if not isinstance(rec, dict):
            raise ParseError(f"{path}:{lineno}: expected a JSON object", line=lineno)
        for key in ("id", "audio", "speaker", "alignment"):
            if not isinstance(rec.get(key), str) or not rec[key]:
                raise ParseError(
                    f"{path}:{lineno}: missing or non-string field {key!r}",
                    line=lineno,
                    utterance=rec.get("id"),
                    field=key,
                )
        utt_id = rec["id"]
        if utt_id in seen:
            raise ParseError(
                f"{path}:{lineno}: duplicate utterance id {utt_id!r}",
                line=lineno,
                utterance=utt_id,
                field="id",
            )
        seen.add(utt_id)
        if rec["speaker"] not in speakers:
            raise ParseError(
                f"{path}:{lineno}: speaker {rec['speaker']!r} has no role",
                line=lineno,
                utterance=utt_id,
                field="speaker",
            )
        audio = base / rec["audio"]
        if not audio.is_file():
            raise MissingAudio(
                f"audio file not found: {audio}", utterance=utt_id, field="audio"
            )
        phones = read_alignment(base / rec["alignment"], utt_id)
        utterances.append(Utterance(utt_id, audio, rec["speaker"], phones))
    return Corpus(tuple(utterances), speakers)


def write_manifest(path, records, speakers: dict) -> None:
    """Write manifest lines plus the sibling speakers file.

    ``records`` is an iterable of dicts with keys id, audio, speaker,
    alignment (paths relative to the manifest directory).
    """
    path = Path(path)
    lines = [
        json.dumps({k: r[k] for k in ("id", "audio", "speaker", "alignment")})
        for r in records
    ]
    path.write_text("".join(line + "\n" for line in lines))
    (path.parent / SPEAKERS_FILENAME).write_text(json.dumps(speakers, indent=2, sort_keys=True))


def track_to_dict(track: Track) -> dict:
    if isinstance(track, LogF0Track):
        return {
            "schema_version": SCHEMA_VERSION,
            "hop_s": track.hop_s,
            "log": True,
            "frames": [float(v) for v in track.values_log],
            "voiced_mask": [bool(v) for v in track.voiced_mask],
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "hop_s": track.hop_s,
        "frames": [float(v) if on else None for v, on in zip(track.values_hz, track.voiced)],
    }


def track_from_dict(obj: dict) -> Track:
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}",
            field="schema_version",
        )
    hop_s = float(obj["hop_s"])
    if obj.get("log"):
        return LogF0Track(hop_s, np.array(obj["frames"], dtype=np.float64), obj["voiced_mask"])
    frames = obj["frames"]
    voiced = np.array([v is not None for v in frames], dtype=bool)
    values = np.array([0.0 if v is None else v for v in frames], dtype=np.float64)
    return F0Track(hop_s, values, voiced)


def save_track(path, track: Track) -> None:
    try:
        Path(path).write_text(json.dumps(track_to_dict(track)) + "\n")
    except OSError as exc:
        raise IoError(str(exc), path=str(path))


def load_track(path) -> Track:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise IoError(str(exc), path=str(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", path=str(path))
    try:
        return track_from_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed track ({exc})", path=str(path))


def save_stats(path, stats: SpeakerStats) -> None:
    obj = {
        "schema_version": SCHEMA_VERSION,
        "mean_hz": stats.mean_hz,
        "variance_hz2": stats.variance_hz2,
        "n_frames": stats.n_frames,
    }
    Path(path).write_text(json.dumps(obj) + "\n")


def load_stats(path) -> SpeakerStats:
    obj = json.loads(Path(path).read_text())
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"unsupported schema_version {obj.get('schema_version')!r}", path=str(path)
        )
    return SpeakerStats(float(obj["mean_hz"]), float(obj["variance_hz2"]), int(obj["n_frames"]))
