import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedharm.dp import (
    AdaptiveClipParams,
    AdaptiveClipState,
    DpConfig,
    DpError,
    clip_update,
    dp_aggregate,
    update_clip_norm,
)


def test_clip_examples():
    d = np.array([6.0, 8.0])
    c, bit = clip_update(d, 1.0)
    np.testing.assert_allclose(c, [0.6, 0.8])
    assert bit == 0 and np.linalg.norm(c) == pytest.approx(1.0)
    c, bit = clip_update(np.array([0.3, 0.4]), 1.0)
    assert c.tolist() == [0.3, 0.4] and bit == 1
    c, bit = clip_update(np.zeros(3), 1.0)
    assert not c.any() and bit == 1


@settings(max_examples=300, deadline=None)
@given(
    arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e6, 1e6)),
    st.floats(1e-6, 1e3),
)
def test_clip_properties(d, clip):
    c, bit = clip_update(d, clip)
    n = np.linalg.norm(d)
    assert np.linalg.norm(c) <= clip * (1 + 1e-12)
    assert bit == int(n <= clip)
    if n > 0:
        # direction preserved
        assert np.dot(c, d) >= 0


def test_aggregate_without_noise_is_mean():
    cl = [np.array([0.1, 0.2]), np.array([0.3, -0.2])]
    out = dp_aggregate(cl, 1.0, 0.0, 2.0, np.random.default_rng(0))
    np.testing.assert_allclose(out, [0.2, 0.0])


def test_aggregate_empty_is_scaled_noise():
    out = dp_aggregate([], 0.5, 2.0, 4.0, np.random.default_rng(1), dimension=3)
    ref = np.random.default_rng(1).normal(0.0, 1.0, size=3) / 4.0
    np.testing.assert_allclose(out, ref)


def test_aggregate_rejects_unclipped():
    with pytest.raises(DpError, match="norm"):
        dp_aggregate([np.array([3.0, 4.0])], 1.0, 1.0, 1.0, np.random.default_rng(0))
    with pytest.raises(DpError):
        dp_aggregate([], 1.0, 1.0, 1.0, np.random.default_rng(0))


def test_noise_std():
    z, clip = 0.875, 0.2
    out = dp_aggregate([], clip, z, 1.0, np.random.default_rng(7), dimension=100_000)
    assert abs(out.std() / (z * clip) - 1) < 0.02
    assert abs(out.mean()) < 5 * z * clip / math.sqrt(100_000)


def test_adaptive_clip_hand_values():
    p = AdaptiveClipParams(initial_clip=0.1, target_quantile=0.5, clip_learning_rate=0.2, quantile_noise=0.0)
    s = AdaptiveClipState(1.0)
    rng = np.random.default_rng(0)
    assert update_clip_norm(s, [1] * 10, p, 10, rng).current_clip == pytest.approx(math.exp(-0.1))
    assert update_clip_norm(s, [0] * 10, p, 10, rng).current_clip == pytest.approx(math.exp(0.1))
    fixed = update_clip_norm(s, [1] * 5 + [0] * 5, p, 10, rng)
    assert fixed.current_clip == 1.0 and fixed.round == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(0, 1), max_size=40), min_size=1, max_size=30), st.integers(0, 2**32))
def test_adaptive_clip_stays_positive(rounds, seed):
    p = AdaptiveClipParams()
    s = AdaptiveClipState(p.initial_clip)
    rng = np.random.default_rng(seed)
    for bits in rounds:
        s = update_clip_norm(s, bits, p, 25.0, rng)
        assert s.current_clip > 0 and math.isfinite(s.current_clip)


def test_default_quantile_noise():
    assert AdaptiveClipParams().noise_std(25.0) == 1.25
    assert AdaptiveClipParams(quantile_noise=0.3).noise_std(25.0) == 0.3


def test_config_validation():
    with pytest.raises(DpError):
        DpConfig(-1.0)
    with pytest.raises(DpError):
        DpConfig(1.0, delta=0.0)
    with pytest.raises(DpError):
        DpConfig(1.0, clip_norm=0.0)
    with pytest.raises(DpError):
        AdaptiveClipParams(target_quantile=1.0)
    assert DpConfig(1.0, adaptive=AdaptiveClipParams(initial_clip=0.3)).initial_clip_state().current_clip == 0.3
