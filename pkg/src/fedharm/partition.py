"""Held-out test split and homogeneous artificial clients."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ingest import HARMFUL, NORMAL, Corpus, ExampleRecord
from .rng import round_half_away, substream


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionSpec:
    client_size: int = 100
    client_harmful_ratio: float = 0.5
    test_fraction: float = 0.10
    test_harmful_ratio: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise PartitionError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if not 0.0 < self.test_harmful_ratio < 1.0:
            raise PartitionError(f"test_harmful_ratio must be in (0, 1), got {self.test_harmful_ratio}")
        if self.client_size < 2:
            raise PartitionError(f"client_size must be >= 2, got {self.client_size}")
        if not 0.0 < self.client_harmful_ratio <= 1.0:
            raise PartitionError(
                f"client_harmful_ratio must be in (0, 1], got {self.client_harmful_ratio}"
            )

    @property
    def harmful_per_client(self) -> int:
        return round_half_away(self.client_harmful_ratio * self.client_size)


@dataclass
class ClientShard:
    """One artificial client: an index list into the source corpus."""

    client_id: int
    indices: np.ndarray
    harmful_count: int
    examples: list[ExampleRecord] = field(repr=False)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class FederatedDataset:
    corpus: Corpus
    test_indices: np.ndarray
    clients: list[ClientShard]
    spec: PartitionSpec

    @property
    def test_set(self) -> list[ExampleRecord]:
        return [self.corpus.examples[i] for i in self.test_indices]

    @property
    def population(self) -> list[int]:
        return [c.client_id for c in self.clients]

    def client(self, client_id: int) -> ClientShard:
        return self.clients[self._index[client_id]]

    def __post_init__(self):
        self._index = {c.client_id: k for k, c in enumerate(self.clients)}
        self._test_cache: dict = {}


def _class_indices(corpus: Corpus, indices: np.ndarray | None = None) -> dict[int, np.ndarray]:
    labels = np.fromiter((ex.label for ex in corpus.examples), dtype=np.int8, count=len(corpus))
    idx = np.arange(len(corpus)) if indices is None else np.asarray(indices)
    return {cls: idx[labels[idx] == cls] for cls in (NORMAL, HARMFUL)}


def holdout_sizes(n: int, spec: PartitionSpec) -> tuple[int, int]:
    """(test size, harmful examples in the test set) for a corpus of ``n``."""
    n_test = round_half_away(spec.test_fraction * n)
    return n_test, round_half_away(spec.test_harmful_ratio * n_test)


def split_test(corpus: Corpus, spec: PartitionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sample the test set per class; returns (test indices, pool indices), both sorted."""
    n_test, n_harm = holdout_sizes(len(corpus), spec)
    need = {HARMFUL: n_harm, NORMAL: n_test - n_harm}
    by_class = _class_indices(corpus)
    for cls, name in ((HARMFUL, "harmful"), (NORMAL, "normal")):
        have = len(by_class[cls])
        if have < need[cls]:
            raise PartitionError(
                f"test set needs {need[cls]} {name} examples but corpus has {have} "
                f"(shortfall {need[cls] - have})"
            )
    chosen = []
    for cls in (NORMAL, HARMFUL):
        rng = substream(spec.seed, "partition", cls)
        chosen.append(rng.permutation(by_class[cls])[: need[cls]])
    test = np.sort(np.concatenate(chosen))
    mask = np.ones(len(corpus), dtype=bool)
    mask[test] = False
    return test, np.flatnonzero(mask)


def max_clients_from_counts(n_harmful: int, n_normal: int, spec: PartitionSpec) -> int:
    h = spec.harmful_per_client
    if h == 0:
        raise PartitionError(
            f"client_harmful_ratio {spec.client_harmful_ratio} rounds to 0 harmful examples "
            f"at client_size {spec.client_size}"
        )
    by_harm = n_harmful // h
    n_norm = spec.client_size - h
    by_norm = n_normal // n_norm if n_norm > 0 else math.inf
    return int(min(by_harm, by_norm))


def max_clients(corpus: Corpus, pool: np.ndarray, spec: PartitionSpec) -> int:
    by_class = _class_indices(corpus, pool)
    return max_clients_from_counts(len(by_class[HARMFUL]), len(by_class[NORMAL]), spec)


def build_clients(
    corpus: Corpus, pool: np.ndarray, spec: PartitionSpec, n_clients: int
) -> list[ClientShard]:
    """Carve ``n_clients`` disjoint shards with exactly h harmful examples each.

    Each class of the pool is permuted once (one substream per class); client
    ``i`` takes the ``i``-th consecutive block of each permutation and is then
    shuffled with its own substream.  Any subset of clients can therefore be
    built independently and still match the sequential construction.
    """
    limit = max_clients(corpus, pool, spec)
    if n_clients > limit:
        raise PartitionError(f"requested {n_clients} clients but at most {limit} can be built")
    if n_clients < 0:
        raise PartitionError("n_clients must be non-negative")
    h = spec.harmful_per_client
    n_norm = spec.client_size - h
    by_class = _class_indices(corpus, pool)
    perm_h = substream(spec.seed, "partition", HARMFUL, 1).permutation(by_class[HARMFUL])
    perm_n = substream(spec.seed, "partition", NORMAL, 1).permutation(by_class[NORMAL])
    shards = []
    for cid in range(n_clients):
        idx = np.concatenate([perm_h[cid * h:(cid + 1) * h], perm_n[cid * n_norm:(cid + 1) * n_norm]])
        idx = substream(spec.seed, "partition", 2, cid).permutation(idx)
        shards.append(ClientShard(cid, idx, h, [corpus.examples[i] for i in idx]))
    return shards


def partition(corpus: Corpus, spec: PartitionSpec, n_clients: int | None = None) -> FederatedDataset:
    """Test split followed by client construction; ``n_clients=None`` builds the maximum."""
    test, pool = split_test(corpus, spec)
    if n_clients is None:
        n_clients = max_clients(corpus, pool, spec)
    return FederatedDataset(corpus, test, build_clients(corpus, pool, spec, n_clients), spec)


# --------------------------------------------------------------------------
# manifest

def write_manifest(fd: FederatedDataset, path: str | Path) -> None:
    """Text manifest: a JSON spec line, then one line per client and one for the test set.

    Lines after the header are ``<name>\\t<JSON list of example ids>`` where
    name is ``test`` or ``client:<id>``; ids are listed in shard order.
    """
    ids = [ex.id for ex in fd.corpus.examples]
    lines = ["# fedharm-partition v1 " + json.dumps(asdict(fd.spec), sort_keys=True)]
    lines.append("test\t" + json.dumps([ids[i] for i in fd.test_indices]))
    for shard in fd.clients:
        lines.append(f"client:{shard.client_id}\t" + json.dumps([ids[i] for i in shard.indices]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path, corpus: Corpus) -> FederatedDataset:
    """Rebuild a FederatedDataset from a manifest and the corpus it was made from."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = text[0]
    if not header.startswith("# fedharm-partition v1 "):
        raise PartitionError(f"{path}: not a partition manifest")
    spec = PartitionSpec(**json.loads(header[len("# fedharm-partition v1 "):]))
    pos = {ex.id: k for k, ex in enumerate(corpus.examples)}
    test = None
    clients = []
    for line in text[1:]:
        if not line.strip():
            continue
        name, _, rest = line.partition("\t")
        try:
            idx = np.array([pos[i] for i in json.loads(rest)], dtype=np.int64)
        except KeyError as exc:
            raise PartitionError(f"{path}: example id {exc.args[0]!r} not in corpus") from None
        if name == "test":
            test = idx
        else:
            cid = int(name.split(":", 1)[1])
            harm = int(sum(corpus.examples[i].label for i in idx))
            clients.append(ClientShard(cid, idx, harm, [corpus.examples[i] for i in idx]))
    if test is None:
        raise PartitionError(f"{path}: no test line")
    return FederatedDataset(corpus, test, clients, spec)
