import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from fedharm.ingest import preprocess
from fedharm.rng import STREAMS, derive_seed, round_half_away, substream
from fedharm.synth import SynthSpec, as_raw_records, class_vocabularies, generate_examples, write_synthetic_csv


def test_round_half_away():
    assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, -2.5, 2.4999)] == [1, 2, 3, -1, -3, 2]


@given(st.floats(-1e9, 1e9))
def test_round_half_away_is_nearest(x):
    r = round_half_away(x)
    assert abs(r - x) <= 0.5


def test_substreams_are_keyed():
    a = substream(1, "noise", 3).random(4)
    np.testing.assert_array_equal(a, substream(1, "noise", 3).random(4))
    assert not np.array_equal(a, substream(1, "noise", 4).random(4))
    assert not np.array_equal(a, substream(1, "clip", 3).random(4))
    assert not np.array_equal(a, substream(2, "noise", 3).random(4))
    assert 0 <= derive_seed(5, "repetition", 0, 1) < 2**63
    assert len(set(STREAMS.values())) == len(STREAMS)


def test_synth_counts_and_determinism():
    spec = SynthSpec(n_examples=1000, harmful_fraction=0.4, seed=3)
    a, b = generate_examples(spec), generate_examples(spec)
    assert a == b
    assert sum(e.label for e in a) == 400
    assert all(len(e.tokens) >= 1 for e in a)


def test_synth_overlap():
    v = class_vocabularies(SynthSpec(vocab_size=200, overlap=0.1))
    assert len(set(v[0]) & set(v[1])) == 20
    assert len(v[0]) == len(v[1]) == 200


def test_synth_tokens_survive_preprocessing(tmp_path):
    ex = generate_examples(SynthSpec(n_examples=50, background_rate=0.3, seed=1))
    for r, e in zip(as_raw_records(ex), ex):
        assert tuple(preprocess(r.text)) == e.tokens
    assert write_synthetic_csv(SynthSpec(n_examples=10), tmp_path / "s.csv") == 10
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "id,text,label"
