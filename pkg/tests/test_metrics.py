import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from f0kit.errors import BadRange, BinMismatch, EmptyInput, HopMismatch, LengthMismatch, TooShort
from f0kit.metrics import (
    F0Distribution,
    build_distribution,
    compare,
    kld,
    pearson,
    reference_range,
    rmse,
)
from f0kit.trajectory import LogF0Track

LN = math.log
hop = 0.005


def T(values, hop_s=hop):
    return LogF0Track(hop_s, np.asarray(values, dtype=float))


def _dist(probs):
    probs = np.asarray(probs, dtype=float)
    return F0Distribution(np.arange(probs.size + 1, dtype=float), probs, 1e-8)


log_values = st.lists(st.floats(LN(60), LN(400)), min_size=2, max_size=50)


class TestRmse:
    def test_identity(self):
        r = rmse(T([LN(100), LN(170)]), T([LN(100), LN(170)]))
        assert r.rmse_log == 0.0 and r.rmse_hz == 0.0

    def test_octave(self):
        r = rmse(T([LN(100)] * 2), T([LN(200)] * 2))
        assert r.rmse_log == pytest.approx(LN(2), abs=1e-12)
        assert r.rmse_hz == pytest.approx(100.0, abs=1e-9)

    def test_single_frame_hz(self):
        assert rmse(T([LN(100)]), T([LN(150)])).rmse_hz == pytest.approx(50.0, abs=1e-9)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            rmse(T([LN(100)]), T([LN(100)] * 2))
        with pytest.raises(HopMismatch):
            rmse(T([LN(100)]), T([LN(100)], 0.01))

    @settings(max_examples=100, deadline=None)
    @given(log_values, st.randoms(use_true_random=False))
    def test_symmetric_nonnegative(self, a, rnd):
        b = [v + rnd.uniform(-0.2, 0.2) for v in a]
        ab, ba = rmse(T(a), T(b)), rmse(T(b), T(a))
        assert ab.rmse_log == ba.rmse_log >= 0
        assert ab.rmse_hz == pytest.approx(ba.rmse_hz)


class TestPearson:
    def test_self(self):
        x = T(LN(150) + np.sin(np.arange(20)) * 0.1)
        assert pearson(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_anti(self):
        a = LN(150) + np.linspace(-0.2, 0.3, 30)
        assert pearson(T(a), T(-a + 2 * LN(150))) == pytest.approx(-1.0, abs=1e-12)

    def test_flat_returns_zero(self):
        flat = T([LN(150)] * 10)
        other = T(LN(150) + np.random.default_rng(0).normal(0, 0.1, 10))
        assert pearson(flat, other) == 0.0
        assert pearson(other, flat) == 0.0
        assert pearson(flat, flat) == 0.0

    def test_too_short(self):
        with pytest.raises(TooShort):
            pearson(T([LN(100)]), T([LN(100)]))

    def test_against_numpy_corrcoef(self):
        rng = np.random.default_rng(3)
        a = LN(150) + rng.normal(0, 0.1, 200)
        b = 0.3 * a + rng.normal(0, 0.05, 200) + 3.5
        assert pearson(T(a), T(b)) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(log_values, st.floats(0.1, 1.5), st.floats(-0.5, 0.5), st.randoms(use_true_random=False))
    def test_positive_affine_invariance(self, a, scale, shift, rnd):
        a = np.array(a)
        b = a[::-1] + np.array([rnd.uniform(-0.1, 0.1) for _ in a])
        if np.all(a == a[0]) or np.all(b == b[0]):
            return
        mid = a.mean()
        a2 = mid + scale * (a - mid) + shift
        if np.all(a2 == a2[0]):
            return
        assert pearson(T(a2), T(b)) == pytest.approx(pearson(T(a), T(b)), abs=1e-9)


def test_compare_combines():
    a = T(LN(150) + np.linspace(0, 0.2, 10))
    rep = compare(a, T(a.values_log + 0.1))
    assert rep.rmse_log == pytest.approx(0.1, abs=1e-12)
    assert rep.correlation == pytest.approx(1.0, abs=1e-12)
    assert rep.n_frames == 10


class TestBuildDistribution:
    def test_point_mass(self):
        d = build_distribution([0.1, 0.2, 0.3], 2, (0.0, 1.0), 1e-8)
        n = 3
        np.testing.assert_allclose(d.probs, [(n + 1e-8) / (n + 2e-8), 1e-8 / (n + 2e-8)], rtol=1e-12)
        assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_uniform_centres(self):
        d = build_distribution([0.125, 0.375, 0.625, 0.875], 4, (0.0, 1.0), 1e-8)
        np.testing.assert_allclose(d.probs, 0.25, atol=1e-9)

    def test_clamping(self):
        d = build_distribution([-5.0, 0.5, 99.0], 2, (0.0, 1.0), 1e-8)
        np.testing.assert_allclose(d.probs, [1 / 3, 2 / 3], atol=1e-8)

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(11)
        lo, hi, bins = 0.0, 1.0, 8
        edges = np.linspace(lo, hi, bins + 1)
        # values exactly on every edge plus random interior values
        values = np.concatenate([edges, rng.uniform(-0.2, 1.2, 300)])
        counts = np.zeros(bins)
        for v in values:
            k = None
            for j in range(bins):
                if edges[j] <= v < edges[j + 1]:
                    k = j
            if k is None:
                k = 0 if v < lo else bins - 1
            counts[k] += 1
        expected = (counts + 1e-8) / (values.size + bins * 1e-8)
        d = build_distribution(values, bins, (lo, hi), 1e-8)
        np.testing.assert_allclose(d.probs, expected, rtol=1e-12)
        np.testing.assert_array_equal(d.bin_edges, edges)

    def test_interior_edge_goes_right(self):
        d = build_distribution([0.5], 2, (0.0, 1.0), 1e-8)
        assert d.probs[1] > d.probs[0]

    @pytest.mark.parametrize(
        "kwargs,exc",
        [
            (dict(values=[], bins=4, range=(0, 1)), EmptyInput),
            (dict(values=[1.0], bins=1, range=(0, 1)), BadRange),
            (dict(values=[1.0], bins=4, range=(1, 1)), BadRange),
            (dict(values=[1.0], bins=4, range=(0, 1), epsilon=0.0), BadRange),
        ],
    )
    def test_errors(self, kwargs, exc):
        with pytest.raises(exc):
            build_distribution(**kwargs)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200),
        st.integers(2, 80),
        st.floats(1e-12, 1e-2),
    )
    def test_sums_to_one_without_zero_bins(self, values, bins, eps):
        d = build_distribution(values, bins, (-10.0, 10.0), eps)
        assert abs(d.probs.sum() - 1.0) < 1e-9
        assert np.all(d.probs > 0)
        assert np.all(np.diff(d.bin_edges) > 0)


def test_reference_range_widens_degenerate():
    lo, hi = reference_range([5.0, 5.0])
    assert lo < 5.0 < hi


class TestKld:
    def test_hand_example(self):
        # 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75)
        assert kld(_dist([0.5, 0.5]), _dist([0.25, 0.75])) == pytest.approx(0.1438410362, abs=1e-9)

    def test_asymmetry(self):
        # 0.25 ln(0.25/0.5) + 0.75 ln(0.75/0.5)
        assert kld(_dist([0.25, 0.75]), _dist([0.5, 0.5])) == pytest.approx(0.1308120359, abs=1e-9)

    def test_identity(self):
        p = build_distribution(np.random.default_rng(2).normal(size=500), 50)
        assert kld(p, p) == 0.0

    def test_bin_mismatch(self):
        p = build_distribution([0.2, 0.6], 4, (0, 1))
        q = build_distribution([0.2, 0.6], 4, (0, 2))
        with pytest.raises(BinMismatch):
            kld(p, q)
        with pytest.raises(BinMismatch):
            kld(p, build_distribution([0.2, 0.6], 5, (0, 1)))

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(0, 1), min_size=1, max_size=100),
        st.lists(st.floats(0, 1), min_size=1, max_size=100),
        st.integers(2, 30),
    )
    def test_gibbs(self, xs, ys, bins):
        p = build_distribution(xs, bins, (0.0, 1.0), 1e-8)
        q = build_distribution(ys, bins, (0.0, 1.0), 1e-8)
        assert kld(p, q) >= -1e-12
