"""Synthetic two-class tweet corpus, so experiments run without restricted data.

Each class draws tokens from its own Zipf-weighted vocabulary.  A fraction
``overlap`` of each vocabulary is shared between the classes; optionally a
fraction ``background_rate`` of tokens comes from a class-independent
background vocabulary, and ``label_noise`` flips labels at random.
Token strings are lowercase letters with class-specific prefixes so they
survive preprocessing untouched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import HARMFUL, NORMAL, Corpus, ExampleRecord, RawRecord
from .rng import round_half_away, substream

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class SynthSpec:
    n_examples: int = 10_000
    harmful_fraction: float = 0.5
    vocab_size: int = 200
    overlap: float = 0.1
    mean_length: float = 12.0
    background_rate: float = 0.0
    background_vocab: int = 500
    label_noise: float = 0.0
    zipf_exponent: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_examples < 0:
            raise ValueError("n_examples must be >= 0")
        if not 0.0 <= self.harmful_fraction <= 1.0:
            raise ValueError("harmful_fraction must be in [0, 1]")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError("overlap must be in [0, 1]")
        if not 0.0 <= self.background_rate <= 1.0:
            raise ValueError("background_rate must be in [0, 1]")
        if not 0.0 <= self.label_noise <= 0.5:
            raise ValueError("label_noise must be in [0, 0.5]")
        if self.vocab_size < 1 or self.mean_length <= 0:
            raise ValueError("vocab_size and mean_length must be positive")


def _word(prefix: str, k: int) -> str:
    out = []
    for _ in range(3):
        k, r = divmod(k, 26)
        out.append(_LETTERS[r])
    while k:
        k, r = divmod(k, 26)
        out.append(_LETTERS[r])
    return prefix + "".join(out)


def _zipf(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def class_vocabularies(spec: SynthSpec) -> dict[int, list[str]]:
    n_shared = round_half_away(spec.overlap * spec.vocab_size)
    shared = [_word("sx", k) for k in range(n_shared)]
    return {
        HARMFUL: [_word("hx", k) for k in range(spec.vocab_size - n_shared)] + shared,
        NORMAL: [_word("nx", k) for k in range(spec.vocab_size - n_shared)] + shared,
    }


def generate_examples(spec: SynthSpec) -> list[ExampleRecord]:
    rng = substream(spec.seed, "synth")
    vocab = class_vocabularies(spec)
    background = [_word("bx", k) for k in range(spec.background_vocab)]
    n_harm = round_half_away(spec.harmful_fraction * spec.n_examples)
    labels = np.array([HARMFUL] * n_harm + [NORMAL] * (spec.n_examples - n_harm))
    labels = rng.permutation(labels)
    # Shuffle word ranks per class so shared words are not always the rarest.
    probs = {}
    for cls in (NORMAL, HARMFUL):
        probs[cls] = rng.permutation(_zipf(len(vocab[cls]), spec.zipf_exponent))
    bg_probs = _zipf(len(background), spec.zipf_exponent)
    lengths = 1 + rng.poisson(spec.mean_length - 1, size=spec.n_examples)
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    words = np.empty(offsets[-1], dtype=object)
    token_cls = np.repeat(labels, lengths)
    for cls in (NORMAL, HARMFUL):
        sel = np.flatnonzero(token_cls == cls)
        pool = np.array(vocab[cls], dtype=object)
        words[sel] = pool[rng.choice(len(pool), size=len(sel), p=probs[cls])]
    if spec.background_rate > 0:
        sel = np.flatnonzero(rng.random(len(words)) < spec.background_rate)
        words[sel] = np.array(background, dtype=object)[rng.choice(len(background), size=len(sel), p=bg_probs)]
    flips = rng.random(spec.n_examples) < spec.label_noise
    out = []
    for i, cls in enumerate(labels):
        label = int(cls) ^ int(flips[i])
        out.append(ExampleRecord(f"s{i}", tuple(words[offsets[i]:offsets[i + 1]]), label))
    return out


def synthetic_corpus(spec: SynthSpec) -> Corpus:
    return Corpus(generate_examples(spec))


def write_synthetic_csv(spec: SynthSpec, path: str | Path) -> int:
    """Write ``id,text,label`` rows with labels ``harmful``/``normal``; returns row count."""
    examples = generate_examples(spec)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id", "text", "label"))
        for ex in examples:
            w.writerow((ex.id, " ".join(ex.tokens), "harmful" if ex.label == HARMFUL else "normal"))
    return len(examples)


def as_raw_records(examples: list[ExampleRecord]) -> list[RawRecord]:
    return [RawRecord(ex.id, " ".join(ex.tokens), "harmful" if ex.label else "normal") for ex in examples]
