"""Command-line entry point: ``f0kit <subcommand> ...``.

Errors are reported as one JSON object on stderr with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from . import metrics
from .corpus import load_manifest, load_stats, load_track, save_stats, save_track
from .errors import F0KitError, InvalidTrainConfig
from .pipeline import (
    as_log_track,
    compare_dirs,
    corpus_vocabulary,
    extract_corpus,
    kld_table,
    list_tracks,
    load_log_tracks,
    predict_corpus,
    stats_for_dir,
    track_path,
    training_pairs,
)
from .pitch import PitchConfig
from .predictor import TrainConfig, save_model, load_model, train
from .trajectory import gen_flat, gen_linear, gen_sine, rescale_to_target

log = logging.getLogger("f0kit")


class UsageError(F0KitError):
    pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _report_paths(out: str) -> tuple[Path, Path]:
    stem = Path(out)
    if stem.suffix in (".csv", ".json"):
        stem = stem.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    return stem.with_suffix(".csv"), stem.with_suffix(".json")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[h]) for h in header])


def _write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _pitch_config(args) -> PitchConfig:
    cfg = PitchConfig(args.fmin, args.fmax, args.hop, args.window, args.threshold)
    if not (0 < cfg.fmin_hz < cfg.fmax_hz) or cfg.hop_s <= 0 or cfg.window_s <= 0:
        raise UsageError(
            "invalid pitch flags", fmin=cfg.fmin_hz, fmax=cfg.fmax_hz, hop=cfg.hop_s
        )
    if not 0 < cfg.voicing_threshold < 1:
        raise UsageError("--threshold must lie in (0, 1)")
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args) -> int:
    cfg = _pitch_config(args)
    corpus = load_manifest(args.manifest, args.speakers)
    summary = extract_corpus(corpus, cfg, args.out)
    _write_json(Path(args.out) / "summary.json", summary)
    for spk, entry in summary["speakers"].items():
        print(f"{spk}\t{entry['role']}\tvoiced={entry['n_voiced']}\tmean_hz={_fmt(entry.get('mean_hz'))}")
    return 0


def cmd_stats(args) -> int:
    stats = stats_for_dir(args.tracks)
    save_stats(args.out, stats)
    print(f"mean_hz={_fmt(stats.mean_hz)}\tvariance_hz2={_fmt(stats.variance_hz2)}\tn={stats.n_frames}")
    return 0


def cmd_compare(args) -> int:
    report = compare_dirs(args.a, args.b)
    csv_path, json_path = _report_paths(args.out)
    header = ["id", "n_frames", "rmse_hz", "rmse_log", "correlation"]
    mean_row = {"id": "__mean__", "n_frames": report["mean"]["n_utterances"], **report["mean"]}
    _write_csv(csv_path, header, report["rows"] + [mean_row])
    _write_json(json_path, report)
    m = report["mean"]
    print(
        f"utterances={m['n_utterances']}\trmse_hz={_fmt(m['rmse_hz'])}\t"
        f"rmse_log={_fmt(m['rmse_log'])}\tcorrelation={_fmt(m['correlation'])}"
    )
    return 0


def _system_dirs(specs) -> dict[str, Path]:
    systems = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            path, name = spec, Path(spec).name
        if name in systems:
            raise UsageError(f"duplicate system name {name!r}")
        systems[name] = Path(path)
    return systems


def cmd_dist(args) -> int:
    if args.bins < 2 or not args.epsilon > 0:
        raise UsageError("--bins must be >= 2 and --epsilon > 0", bins=args.bins, epsilon=args.epsilon)
    systems = _system_dirs(args.systems)
    table = kld_table(
        load_log_tracks(args.target),
        {name: load_log_tracks(d) for name, d in systems.items()},
        args.bins,
        args.epsilon,
    )
    csv_path, json_path = _report_paths(args.out)
    _write_csv(csv_path, ["system", "kld_f0", "kld_delta"], table["rows"])
    _write_json(json_path, table)
    width = max(len(r["system"]) for r in table["rows"])
    print(f"{'system':<{width}}  F0 | delta-F0")
    for r in table["rows"]:
        print(f"{r['system']:<{width}}  {r['kld_f0']:.4f} | {r['kld_delta']:.4f}")
    return 0


def _generate(args, n_frames: int):
    if args.kind == "flat":
        return gen_flat(n_frames, args.hop, math.log(args.level))
    if args.kind == "sine":
        return gen_sine(n_frames, args.hop, math.log(args.center), args.amplitude, args.period)
    return gen_linear(n_frames, args.hop, math.log(args.start), math.log(args.end))


def cmd_synth_traj(args) -> int:
    for name in ("level", "center", "start", "end"):
        if getattr(args, name) <= 0:
            raise UsageError(f"--{name} must be a positive frequency in Hz")
    if args.like is None:
        if args.n_frames is None:
            raise UsageError("either --n-frames or --like is required")
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_track(out, _generate(args, args.n_frames))
        return 0
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for utt_id, path in list_tracks(args.like).items():
        ref = load_track(path)
        args.hop = ref.hop_s
        save_track(track_path(out_dir, utt_id), _generate(args, len(ref)))
    return 0


def cmd_train(args) -> int:
    pitch_cfg = _pitch_config(args)
    cfg = TrainConfig(args.joint_steps, args.finetune_steps, args.batch, args.lr, args.seed)
    cfg.validate()
    corpus = load_manifest(args.manifest, args.speakers)
    if not corpus.target_speakers:
        raise InvalidTrainConfig("corpus declares no target speaker")
    inventory, speakers = corpus_vocabulary(corpus)
    pairs = training_pairs(corpus, pitch_cfg, inventory, speakers, args.tracks)
    model = train(pairs, cfg, log_every=args.log_every, logger=log)
    model.metadata = {
        "inventory": inventory,
        "speakers": speakers,
        "target_speakers": corpus.target_speakers,
        "hop_s": pitch_cfg.hop_s,
        "window_s": pitch_cfg.effective_window_s,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, model)
    loss_csv = Path(args.loss_csv) if args.loss_csv else out.with_suffix(".loss.csv")
    _write_csv(
        loss_csv,
        ["step", "phase", "loss"],
        [{"step": s, "phase": ph, "loss": l} for s, ph, l in model.history],
    )
    print(f"pairs={len(pairs)}\tfinal_loss={_fmt(model.history[-1][2])}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    corpus = load_manifest(args.manifest, args.speakers)
    info = predict_corpus(model, corpus, args.out, args.speaker)
    print(f"speaker={info['speaker']}\tutterances={len(info['n_frames'])}")
    return 0


def cmd_rescale(args) -> int:
    source, target = load_stats(args.source_stats), load_stats(args.target_stats)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for utt_id, path in list_tracks(args.tracks).items():
        track = as_log_track(load_track(path))
        save_track(track_path(out_dir, utt_id), rescale_to_target(track, source, target))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_pitch_flags(p) -> None:
    p.add_argument("--hop", type=float, default=0.005, help="frame hop in seconds")
    p.add_argument("--window", type=float, default=0.025, help="analysis window in seconds")
    p.add_argument("--fmin", type=float, default=50.0)
    p.add_argument("--fmax", type=float, default=600.0)
    p.add_argument("--threshold", type=float, default=0.1, help="voicing threshold")


def _add_manifest_flags(p) -> None:
    p.add_argument("--manifest", required=True, help="JSON-lines corpus manifest")
    p.add_argument("--speakers", default=None, help="speaker roles file (default: speakers.json next to the manifest)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="f0kit", description=__doc__)
    parser.add_argument("--seed", type=int, default=42, help="global random seed")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract F0 tracks for every utterance")
    _add_manifest_flags(p)
    _add_pitch_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("stats", help="speaker F0 mean/variance over a track directory")
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True, help="stats JSON file")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("compare", help="RMSE / correlation between two track directories")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True, help="report path stem (.csv and .json written)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dist", help="F0 / delta-F0 KLD of systems against a target")
    p.add_argument("--target", required=True)
    p.add_argument("systems", nargs="+", help="system track dirs, optionally NAME=DIR")
    p.add_argument("--bins", type=int, default=metrics.DEFAULT_BINS)
    p.add_argument("--epsilon", type=float, default=metrics.DEFAULT_EPSILON)
    p.add_argument("--out", required=True, help="report path stem (.csv and .json written)")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("synth-traj", help="write flat / sine / linear injection trajectories")
    p.add_argument("--kind", choices=("flat", "sine", "linear"), required=True)
    p.add_argument("--n-frames", type=int, default=None)
    p.add_argument("--like", default=None, help="emit one trajectory per track in this dir, matching lengths")
    p.add_argument("--hop", type=float, default=0.005)
    p.add_argument("--level", type=float, default=150.0, help="flat level (Hz)")
    p.add_argument("--center", type=float, default=150.0, help="sine centre (Hz)")
    p.add_argument("--amplitude", type=float, default=0.2, help="sine amplitude (log-Hz)")
    p.add_argument("--period", type=float, default=100.0, help="sine period (frames)")
    p.add_argument("--start", type=float, default=100.0, help="ramp start (Hz)")
    p.add_argument("--end", type=float, default=250.0, help="ramp end (Hz)")
    p.add_argument("--out", required=True, help="track file, or directory with --like")
    p.set_defaults(func=cmd_synth_traj)

    p = sub.add_parser("train", help="train the F0 predictor")
    _add_manifest_flags(p)
    _add_pitch_flags(p)
    p.add_argument("--tracks", default=None, help="precomputed raw F0 tracks (skip extraction)")
    p.add_argument("--joint-steps", type=int, default=2000)
    p.add_argument("--finetune-steps", type=int, default=2000)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--out", required=True, help="model JSON file")
    p.add_argument("--loss-csv", default=None, help="loss curve CSV (default: <out>.loss.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict log-F0 tracks with a trained model")
    _add_manifest_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--speaker", default=None, help="speaker flag to condition on (default: target)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rescale", help="shift tracks from source to target speaker mean")
    p.add_argument("--tracks", required=True)
    p.add_argument("--source-stats", required=True)
    p.add_argument("--target-stats", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rescale)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except F0KitError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        err = {"error": "IoError", "message": str(exc), "context": {"path": getattr(exc, "filename", None)}}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
