import math

import numpy as np
import pytest

from f0kit import synthetic
from f0kit.predictor import TrainingPair, featurize

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = dict(report.user_properties).get("criterion")
    if label is not None:
        _criteria.append((label, report.outcome))


@pytest.fixture(autouse=True)
def _record_criterion(request):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        request.node.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _criteria:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {label}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_toy_pairs(seed: int, utts_per_speaker: int = 8, n_phones: int = 8):
    """Two-speaker toy corpus: supporting at 120 Hz, target at 210 Hz."""
    rng = np.random.default_rng(seed)
    inventory = list(synthetic.TOY_PHONES)
    pairs = []
    for index, (spk, base_hz, is_target) in enumerate([("sup", 120.0, False), ("tgt", 210.0, True)]):
        for k in range(utts_per_speaker):
            phones, oracle = synthetic.toy_pair_data(rng, n_phones, base_hz)
            utt = synthetic.toy_utterance(f"{spk}{k}", phones, spk)
            feats = featurize(utt, 0.005, inventory, index, 2)
            pairs.append(TrainingPair(feats, oracle, is_target, utt.id))
    return pairs


def make_single_pair(seed: int = 0):
    rng = np.random.default_rng(seed)
    phones, oracle = synthetic.toy_pair_data(rng, 8, 180.0)
    utt = synthetic.toy_utterance("solo", phones)
    return TrainingPair(featurize(utt, 0.005, list(synthetic.TOY_PHONES), 0, 1), oracle, True, "solo")


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy_corpus")
    synthetic.write_toy_corpus(
        root, {"sup": ("supporting", 120.0), "tgt": ("target", 210.0)}, utts_per_speaker=3
    )
    return root


LN = math.log
