import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedharm.features import FeatureVector, bucket, featurize, fnv1a64, stack


def test_fnv1a_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64("") == 0xCBF29CE484222325
    assert fnv1a64("a") == 0xAF63DC4C8601EC8C
    assert fnv1a64("foobar") == 0x85944171F73967E8


def test_empty_and_repeated():
    fv = featurize([], 16)
    assert fv.to_dense().tolist() == [0.0] * 16
    fv = featurize(["bad", "bad"], 16)
    assert len(fv.indices) == 1 and fv.values[0] == 1.0


def test_forced_collision():
    fv = featurize(["a", "b"], 1)
    assert fv.indices.tolist() == [0] and fv.values.tolist() == [1.0]


def test_hand_counts():
    d = 1 << 20
    toks = ["x", "y", "x"]
    fv = featurize(toks, d)
    bx, by = bucket("x", d), bucket("y", d)
    assert bx != by
    dense = fv.to_dense()
    assert dense[bx] == pytest.approx(2 / np.sqrt(5))
    assert dense[by] == pytest.approx(1 / np.sqrt(5))


def test_dimension_must_be_power_of_two():
    with pytest.raises(ValueError):
        featurize(["a"], 12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(min_size=1, max_size=5), min_size=1, max_size=20), st.integers(0, 12))
def test_unit_norm_and_sorted(tokens, logd):
    fv = featurize(tokens, 1 << logd)
    assert np.linalg.norm(fv.values) == pytest.approx(1.0)
    assert np.all(np.diff(fv.indices) > 0)
    assert fv.indices.min() >= 0 and fv.indices.max() < (1 << logd)


def test_stack_and_take():
    vs = [featurize(["a"], 8), featurize([], 8), featurize(["b", "c"], 8)]
    m = stack(vs, [1, 0, 1], 8)
    assert m.n_rows == 3
    np.testing.assert_array_equal(m.row(2).to_dense(), vs[2].to_dense())
    sub = m.take([2, 0])
    assert sub.labels.tolist() == [1.0, 1.0]
    np.testing.assert_array_equal(sub.row(1).to_dense(), vs[0].to_dense())
    assert FeatureVector.from_dict({3: 0.5}, 8).to_dense()[3] == 0.5
