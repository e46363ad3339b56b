"""Seed plumbing.

Every random decision in a run comes from a named substream of one 64-bit
seed.  A substream is ``SeedSequence(seed, spawn_key=(stream_id, *keys))``;
the stream ids below are part of the reproducibility contract and must not
be renumbered.

    partition   (class,)            test split, per class (0 normal, 1 harmful)
    partition   (class, 1)          pool permutation used to carve clients
    partition   (2, client_id)      within-client example order
    init        ()                  model initialisation
    shuffle     (client_id,)        mini-batch shuffles inside local_train
    sampling    (round,)            client sampling for a round
    noise       (round,)            Gaussian noise on the aggregated sum
    clip        (round,)            noise on the adaptive-clip indicator sum
    repetition  (rep, module)       per-repetition sub-seeds
    synth       ()                  synthetic corpus generation
"""

import math

import numpy as np

_MASK64 = (1 << 64) - 1

STREAMS = {
    "partition": 1,
    "init": 2,
    "shuffle": 3,
    "sampling": 4,
    "noise": 5,
    "clip": 6,
    "repetition": 7,
    "synth": 8,
}


def _seq(seed: int, stream: str, keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=(STREAMS[stream], *(int(k) for k in keys)),
    )


def substream(seed: int, stream: str, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, stream, *keys)``."""
    return np.random.default_rng(_seq(seed, stream, keys))


def derive_seed(seed: int, stream: str, *keys: int) -> int:
    """Deterministic 63-bit integer seed derived from ``(seed, stream, *keys)``."""
    hi, lo = _seq(seed, stream, keys).generate_state(2, dtype=np.uint32)
    return ((int(hi) << 32) | int(lo)) & ((1 << 63) - 1)


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero (Python's round() is banker's)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))
