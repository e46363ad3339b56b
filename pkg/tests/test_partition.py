import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_corpus
from fedharm.partition import (
    PartitionError,
    PartitionSpec,
    build_clients,
    holdout_sizes,
    max_clients,
    max_clients_from_counts,
    partition,
    read_manifest,
    split_test,
    write_manifest,
)


def labels_of(corpus, idx):
    return [corpus.examples[i].label for i in idx]


def test_test_split_exact_counts():
    c = make_corpus(400, 600)
    test, pool = split_test(c, PartitionSpec())
    assert len(test) == 100 and sum(labels_of(c, test)) == 8
    assert len(pool) == 900
    assert not set(test) & set(pool)


def test_86k_holdout_sizes():
    assert holdout_sizes(86_000, PartitionSpec()) == (8600, 688)


def test_test_split_shortfall():
    c = make_corpus(5, 995)
    with pytest.raises(PartitionError, match="shortfall 3"):
        split_test(c, PartitionSpec())


def test_max_clients_examples():
    spec = PartitionSpec(client_size=10, client_harmful_ratio=0.5)
    assert max_clients_from_counts(392, 508, spec) == 78
    assert max_clients_from_counts(0, 508, spec) == 0
    with pytest.raises(PartitionError, match="rounds to 0"):
        max_clients_from_counts(10, 10, PartitionSpec(client_size=10, client_harmful_ratio=0.01))
    assert max_clients_from_counts(30, 0, PartitionSpec(client_size=10, client_harmful_ratio=1.0)) == 3


def test_rounding_half_away():
    assert PartitionSpec(client_size=5, client_harmful_ratio=0.5).harmful_per_client == 3
    assert PartitionSpec(client_size=3, client_harmful_ratio=0.5).harmful_per_client == 2


def test_fifty_clients_of_1k():
    c = make_corpus(40_000, 60_000)
    fd = partition(c, PartitionSpec(client_size=1000, client_harmful_ratio=0.5, seed=3), 50)
    assert len(fd.clients) == 50
    assert all(len(s) == 1000 and sum(labels_of(c, s.indices)) == 500 for s in fd.clients)


def test_zero_clients_and_too_many():
    c = make_corpus(400, 600)
    _, pool = split_test(c, PartitionSpec())
    assert build_clients(c, pool, PartitionSpec(), 0) == []
    with pytest.raises(PartitionError, match="at most"):
        build_clients(c, pool, PartitionSpec(), 10_000)


def test_pool_fully_consumed():
    # a 20-example pool with 10/10 and client_size 10 -> 2 clients use every id
    c = make_corpus(10, 10)
    pool = np.arange(20)
    shards = build_clients(c, pool, PartitionSpec(client_size=10), 2)
    ids = sorted(i for s in shards for i in s.indices)
    assert ids == list(range(20))
    assert all(s.harmful_count == 5 == sum(labels_of(c, s.indices)) for s in shards)


def test_parallel_construction_matches_sequential():
    c = make_corpus(500, 700)
    spec = PartitionSpec(client_size=20, seed=9)
    _, pool = split_test(c, spec)
    full = build_clients(c, pool, spec, 30)
    part = build_clients(c, pool, spec, 5)
    for a, b in zip(full, part):
        np.testing.assert_array_equal(a.indices, b.indices)


def test_determinism_and_seed_sensitivity():
    c = make_corpus(500, 700)
    a = partition(c, PartitionSpec(client_size=20, seed=1))
    b = partition(c, PartitionSpec(client_size=20, seed=1))
    d = partition(c, PartitionSpec(client_size=20, seed=2))
    np.testing.assert_array_equal(a.test_indices, b.test_indices)
    np.testing.assert_array_equal(a.clients[3].indices, b.clients[3].indices)
    assert not np.array_equal(a.clients[3].indices, d.clients[3].indices)


def test_manifest_round_trip(tmp_path):
    c = make_corpus(300, 500)
    fd = partition(c, PartitionSpec(client_size=20, seed=4), 7)
    write_manifest(fd, tmp_path / "m.txt")
    back = read_manifest(tmp_path / "m.txt", c)
    assert back.spec == fd.spec
    np.testing.assert_array_equal(back.test_indices, fd.test_indices)
    for a, b in zip(fd.clients, back.clients):
        assert a.client_id == b.client_id and a.harmful_count == b.harmful_count
        np.testing.assert_array_equal(a.indices, b.indices)


@settings(max_examples=60, deadline=None)
@given(
    n_h=st.integers(50, 800),
    n_n=st.integers(50, 800),
    size=st.integers(2, 40),
    ratio=st.sampled_from([0.1, 0.25, 0.5, 0.75, 1.0]),
    seed=st.integers(0, 2**32),
)
def test_partition_invariants(n_h, n_n, size, ratio, seed):
    c = make_corpus(n_h, n_n)
    spec = PartitionSpec(client_size=size, client_harmful_ratio=ratio, seed=seed)
    if spec.harmful_per_client == 0:
        return
    try:
        test, pool = split_test(c, spec)
    except PartitionError:
        return
    n_test, n_test_h = holdout_sizes(len(c), spec)
    assert len(test) == n_test and sum(labels_of(c, test)) == n_test_h
    ph = sum(labels_of(c, pool))
    h = spec.harmful_per_client
    expect = min(ph // h, (len(pool) - ph) // (size - h)) if size > h else ph // h
    assert max_clients(c, pool, spec) == expect
    shards = build_clients(c, pool, spec, expect)
    seen = set(test.tolist())
    for s in shards:
        assert len(s) == size and sum(labels_of(c, s.indices)) == h
        assert not seen & set(s.indices.tolist())
        seen |= set(s.indices.tolist())
