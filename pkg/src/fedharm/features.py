"""Hashed term-frequency features.

Tokens are mapped to buckets with 64-bit FNV-1a over their UTF-8 bytes,
reduced modulo the (power-of-two) hash dimension.  Per-document bucket counts
are L2-normalised.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


@lru_cache(maxsize=1 << 18)
def fnv1a64(token: str) -> int:
    h = FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def bucket(token: str, dimension: int) -> int:
    return fnv1a64(token) % dimension


@dataclass(frozen=True)
class FeatureVector:
    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray  # float64
    dimension: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dimension)
        out[self.indices] = self.values
        return out

    @classmethod
    def from_dict(cls, entries: dict[int, float], dimension: int) -> "FeatureVector":
        keys = sorted(entries)
        if keys and (keys[0] < 0 or keys[-1] >= dimension):
            raise ValueError(f"feature index out of range for dimension {dimension}")
        return cls(np.array(keys, dtype=np.int64), np.array([entries[k] for k in keys], dtype=float), dimension)


@dataclass(frozen=True)
class FeatureMatrix:
    """CSR rows of feature vectors plus their labels."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    labels: np.ndarray
    dimension: int

    @property
    def n_rows(self) -> int:
        return len(self.indptr) - 1

    def row(self, i: int) -> FeatureVector:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return FeatureVector(self.indices[lo:hi], self.data[lo:hi], self.dimension)

    def take(self, rows: Sequence[int]) -> "FeatureMatrix":
        return stack([self.row(i) for i in rows], self.labels[np.asarray(rows, dtype=np.int64)], self.dimension)


def featurize(tokens: Sequence[str], dimension: int) -> FeatureVector:
    if dimension <= 0 or dimension & (dimension - 1):
        raise ValueError(f"hash dimension must be a power of two, got {dimension}")
    if not tokens:
        return FeatureVector(np.zeros(0, dtype=np.int64), np.zeros(0), dimension)
    counts = Counter(bucket(t, dimension) for t in tokens)
    keys = sorted(counts)
    vals = np.array([counts[k] for k in keys], dtype=float)
    return FeatureVector(np.array(keys, dtype=np.int64), vals / np.linalg.norm(vals), dimension)


def stack(vectors: Sequence[FeatureVector], labels, dimension: int) -> FeatureMatrix:
    lengths = np.fromiter((len(v.indices) for v in vectors), dtype=np.int64, count=len(vectors))
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    if vectors:
        indices = np.concatenate([v.indices for v in vectors]).astype(np.int64, copy=False)
        data = np.concatenate([v.values for v in vectors]).astype(float, copy=False)
    else:
        indices, data = np.zeros(0, dtype=np.int64), np.zeros(0)
    return FeatureMatrix(indptr, indices, data, np.asarray(labels, dtype=float), dimension)


def featurize_examples(examples, dimension: int) -> FeatureMatrix:
    """Featurise a list of ExampleRecord into a FeatureMatrix."""
    return stack([featurize(ex.tokens, dimension) for ex in examples], [ex.label for ex in examples], dimension)
