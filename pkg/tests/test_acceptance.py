"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints a
PASS/FAIL line for each criterion.
"""

import math
import time

import numpy as np
import pytest

from conftest import make_single_pair, make_toy_pairs
from f0kit.cli import main
from f0kit.corpus import load_track, save_track, track_from_dict, track_to_dict
from f0kit.errors import SchemaVersionMismatch
from f0kit.metrics import F0Distribution, build_distribution, kld, pearson, rmse
from f0kit.pipeline import compare_dirs, kld_table
from f0kit.pitch import F0Track, extract_f0
from f0kit.predictor import (
    TrainConfig,
    PredictorModel,
    grad_check_details,
    l1_loss,
    load_model,
    predict,
    raw_output,
    save_model,
    train,
)
from f0kit.synthetic import random_walk_tracks, sine
from f0kit.trajectory import LogF0Track, SpeakerStats, delta, interpolate, rescale_to_target

LN = math.log


def _random_f0_track(rng, n=None, p_voiced=None):
    n = n or int(rng.integers(2, 120))
    p = rng.uniform(0.1, 0.9) if p_voiced is None else p_voiced
    voiced = rng.random(n) < p
    if not voiced.any():
        voiced[rng.integers(n)] = True
    hz = np.exp(rng.uniform(LN(60), LN(500), n))
    return F0Track(0.005, hz, voiced)


@pytest.mark.criterion("AC1 pitch accuracy on 80-400 Hz sines")
def test_ac1_pitch_accuracy():
    freqs = list(np.arange(80.0, 401.0, 50.0)) + [400.0]
    start = time.perf_counter()
    for f in freqs:
        track = extract_f0(sine(f, 1.0, 16000, 0.5))
        assert track.voiced.all()
        est = track.values_hz
        assert np.median(np.abs(est - f) / f) < 0.01, f
        interior = est[1:-1]
        # an octave error would put the estimate near f/2 or 2f
        assert np.all(np.abs(np.log2(interior / f)) < 0.5), f
    assert time.perf_counter() - start < 5.0


@pytest.mark.criterion("AC2 log-domain interpolation")
def test_ac2_interpolation():
    out = interpolate(F0Track(0.005, [100.0, 0.0, 400.0], [True, False, True]))
    assert abs(out.values_log[1] - LN(200)) <= 1e-12

    rng = np.random.default_rng(2)
    for _ in range(1000):
        track = _random_f0_track(rng)
        logs = interpolate(track).values_log
        assert np.all(np.isfinite(logs)) and logs.size == len(track)
        full = _random_f0_track(rng, p_voiced=1.0)
        assert interpolate(full) == LogF0Track(0.005, np.log(full.values_hz))
        idx = np.flatnonzero(track.voiced)
        np.testing.assert_array_equal(logs[idx], np.log(track.values_hz[idx]))
        for i in np.flatnonzero(~track.voiced):
            flank = [logs[j] for j in (idx[idx < i][-1:].tolist() + idx[idx > i][:1].tolist())]
            assert min(flank) <= logs[i] <= max(flank)


@pytest.mark.criterion("AC3 RMSE and correlation identities")
def test_ac3_metric_identities():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(2, 200))
        x = LogF0Track(0.005, LN(150) + rng.normal(0, 0.2, n))
        if np.all(x.values_log == x.values_log[0]):
            continue
        c = 2 * LN(150)
        assert rmse(x, x).rmse_log == 0.0 and rmse(x, x).rmse_hz == 0.0
        assert pearson(x, x) == pytest.approx(1.0, abs=1e-12)
        assert pearson(x, LogF0Track(0.005, -x.values_log + c)) == pytest.approx(-1.0, abs=1e-12)
        flat = LogF0Track(0.005, np.full(n, rng.uniform(LN(80), LN(300))))
        assert pearson(flat, x) == 0.0 and pearson(x, flat) == 0.0 and pearson(flat, flat) == 0.0


@pytest.mark.criterion("AC4 KLD suite")
def test_ac4_kld():
    def dist(p):
        return F0Distribution(np.arange(len(p) + 1, dtype=float), np.asarray(p, float), 1e-8)

    p, q = dist([0.5, 0.5]), dist([0.25, 0.75])
    assert abs(kld(p, q) - 0.14384) <= 1e-5
    assert abs(kld(q, p) - kld(p, q)) > 1e-3

    rng = np.random.default_rng(4)
    for _ in range(1000):
        bins = int(rng.integers(2, 60))
        a = build_distribution(rng.normal(0, 1, rng.integers(1, 300)), bins, (-3.0, 3.0))
        b = build_distribution(rng.normal(rng.uniform(-1, 1), rng.uniform(0.3, 2), rng.integers(1, 300)), bins, (-3.0, 3.0))
        assert kld(a, a) < 1e-12
        assert kld(a, b) >= 0.0 and kld(b, a) >= 0.0


@pytest.mark.criterion("AC5 KLD ordering target/heldout vs shifted")
def test_ac5_kld_ordering(tmp_path, capsys):
    start = time.perf_counter()
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        target = random_walk_tracks(rng, 10, 200, 150.0)
        heldout = random_walk_tracks(rng, 10, 200, 150.0)
        shifted = random_walk_tracks(rng, 10, 200, 150.0, shift_hz=50.0)
        rows = {r["system"]: r for r in kld_table(target, {"heldout": heldout, "shifted": shifted})["rows"]}
        wins += rows["heldout"]["kld_f0"] < rows["shifted"]["kld_f0"]
    assert wins >= 95

    rng = np.random.default_rng(100)
    for name, kwargs in [("target", {}), ("heldout", {}), ("shifted", {"shift_hz": 50.0})]:
        d = tmp_path / name
        d.mkdir()
        for i, t in enumerate(random_walk_tracks(rng, 5, 200, 150.0, **kwargs)):
            save_track(d / f"u{i}.f0.json", t)
    rc = main([
        "dist", "--target", str(tmp_path / "target"),
        f"heldout={tmp_path / 'heldout'}", f"shifted={tmp_path / 'shifted'}", "--out", str(tmp_path / "kld"),
    ])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["system", "F0", "|", "delta-F0"]
    assert [ln.split()[0] for ln in lines[1:]] == ["heldout", "shifted"]
    assert all(ln.split()[2] == "|" for ln in lines[1:])
    assert (tmp_path / "kld.csv").read_text().splitlines()[0] == "system,kld_f0,kld_delta"
    assert time.perf_counter() - start < 30.0


@pytest.mark.criterion("AC6 controllability harness with identity stub")
def test_ac6_controllability(tmp_path):
    rng = np.random.default_rng(6)
    injected = random_walk_tracks(rng, 100, 200, 150.0)
    for sub, tracks in [
        ("inj", injected),
        ("identity", injected),
        ("noisy", [LogF0Track(t.hop_s, t.values_log + rng.normal(0, 0.05, len(t))) for t in injected]),
    ]:
        (tmp_path / sub).mkdir()
        for i, t in enumerate(tracks):
            save_track(tmp_path / sub / f"u{i:03d}.f0.json", t)

    ident = compare_dirs(tmp_path / "inj", tmp_path / "identity")
    assert ident["mean"]["n_utterances"] == 100
    assert all(r["rmse_log"] == 0.0 and r["rmse_hz"] == 0.0 for r in ident["rows"])
    assert all(r["correlation"] == pytest.approx(1.0, abs=1e-12) for r in ident["rows"])

    noisy = compare_dirs(tmp_path / "inj", tmp_path / "noisy")
    assert abs(noisy["mean"]["rmse_log"] - 0.05) <= 0.005


def _deciles(history, phase="joint"):
    losses = np.array([loss for _, ph, loss in history if ph == phase])
    return [chunk.mean() for chunk in np.array_split(losses, 10)]


@pytest.mark.criterion("AC7 predictor training contract")
def test_ac7_predictor(tmp_path):
    pair = make_single_pair(0)
    model = PredictorModel.init(
        pair.features.dim, seed=3, zero_head=False, output_bias=float(pair.oracle.values_log.mean())
    )
    err, n_checked = grad_check_details(model, pair, 1e-5, n_samples=200)
    assert n_checked >= 100 and err < 1e-4

    start = time.perf_counter()
    fit = train([pair], TrainConfig(1000, 1000, 8, 1e-3, seed=0))
    assert l1_loss(predict(fit, pair.features), pair.oracle) < 0.05
    assert time.perf_counter() - start < 60.0

    pairs = make_toy_pairs(0)
    cfg = TrainConfig(500, 500, 8, 1e-3, seed=0)
    a = train(pairs, cfg)
    deciles = _deciles(a.history)
    assert all(later <= earlier for earlier, later in zip(deciles, deciles[1:])), deciles

    b = train(pairs, cfg)
    assert a.history == b.history
    np.testing.assert_array_equal(a.flat(), b.flat())
    for p in pairs:
        np.testing.assert_array_equal(raw_output(a, p.features), raw_output(b, p.features))


@pytest.mark.criterion("AC8 rescaling round-trip and delta invariance")
def test_ac8_rescale():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        x = interpolate(_random_f0_track(rng, p_voiced=0.7))
        a = SpeakerStats(rng.uniform(100, 250), 1.0, 10)
        b = SpeakerStats(rng.uniform(100, 250), 1.0, 10)
        y = rescale_to_target(x, a, b)
        np.testing.assert_allclose(rescale_to_target(y, b, a).values_log, x.values_log, rtol=0, atol=1e-12)
        if len(x) >= 2:
            np.testing.assert_allclose(delta(y).values, delta(x).values, rtol=0, atol=1e-12)


@pytest.mark.criterion("AC9 persistence round-trips and schema checks")
def test_ac9_persistence(tmp_path):
    rng = np.random.default_rng(9)
    for i in range(50):
        raw = _random_f0_track(rng)
        save_track(tmp_path / f"r{i}.json", raw)
        assert load_track(tmp_path / f"r{i}.json") == raw
        logt = interpolate(raw)
        save_track(tmp_path / f"l{i}.json", logt)
        assert load_track(tmp_path / f"l{i}.json") == logt

    pairs = make_toy_pairs(1, utts_per_speaker=2)
    model = train(pairs, TrainConfig(20, 20, 4, 1e-3, seed=5))
    save_model(tmp_path / "m.json", model)
    back = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(back.flat(), model.flat())
    for p in pairs:
        np.testing.assert_array_equal(raw_output(back, p.features), raw_output(model, p.features))

    obj = track_to_dict(raw)
    obj["schema_version"] = 2
    with pytest.raises(SchemaVersionMismatch):
        track_from_dict(obj)
    text = (tmp_path / "m.json").read_text().replace('"schema_version": 1', '"schema_version": 0')
    (tmp_path / "m0.json").write_text(text)
    with pytest.raises(SchemaVersionMismatch):
        load_model(tmp_path / "m0.json")
