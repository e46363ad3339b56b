"""Client-side local training."""

from __future__ import annotations

import numpy as np

from .features import FeatureMatrix, featurize_examples
from .kernels import lr_train_epoch
from .model import (
    AdamState,
    LocalStats,
    ModelError,
    ModelSpec,
    TrainConfig,
    adam_step,
    gradient,
    loss,
)
from .rng import substream


class TrainingError(RuntimeError):
    def __init__(self, client_id, message):
        super().__init__(f"client {client_id}: {message}")
        self.client_id = client_id
        self.detail = message


def shard_features(shard, spec: ModelSpec) -> FeatureMatrix:
    """Featurise a shard once per hash dimension and keep it on the shard."""
    cache = getattr(shard, "_cache", None)
    key = ("features", spec.hash_dimension)
    if cache is not None and key in cache:
        return cache[key]
    fm = featurize_examples(shard.examples, spec.hash_dimension)
    if cache is not None:
        cache[key] = fm
    return fm


def local_train(
    global_params: np.ndarray,
    shard,
    config: TrainConfig,
    spec: ModelSpec,
) -> tuple[np.ndarray, LocalStats]:
    """Run ``config.epochs`` of mini-batch Adam from ``global_params`` on one shard.

    Optimizer state starts fresh.  The per-epoch shuffle comes from the
    ``shuffle`` substream keyed by (config.seed, client_id), so the result is
    a pure function of the arguments.  Returns (final - global, stats).
    """
    cid = getattr(shard, "client_id", -1)
    x = shard if isinstance(shard, FeatureMatrix) else shard_features(shard, spec)
    n = x.n_rows
    if n == 0:
        raise TrainingError(cid, "empty shard")
    if global_params.shape != (spec.n_params,):
        raise ModelError(f"global parameters have shape {global_params.shape}, expected ({spec.n_params},)")
    rng = substream(config.seed, "shuffle", cid)
    params = global_params.copy()
    epoch_losses = []

    if spec.kind == "logistic_regression":
        m = np.zeros_like(params)
        v = np.zeros_like(params)
        step = 0
        for _ in range(config.epochs):
            order = rng.permutation(n).astype(np.int64)
            step = lr_train_epoch(
                params, m, v, step, x.indptr, x.indices, x.data, x.labels, order,
                config.batch_size, config.learning_rate,
                config.adam_beta1, config.adam_beta2, config.adam_epsilon,
            )
            epoch_losses.append(_checked_loss(params, x, spec, cid))
    else:
        state = AdamState.zeros(len(params))
        keep = 1.0 - spec.dropout
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                rows = order[start:start + config.batch_size]
                batch = x.take(rows)
                mask = None
                if spec.dropout > 0:
                    mask = (rng.random((len(rows), spec.hidden_units)) < keep) / keep
                try:
                    g = gradient(params, batch, spec, dropout_mask=mask)
                except ModelError as exc:
                    raise TrainingError(cid, str(exc)) from exc
                params, state = adam_step(params, g, state, config)
            epoch_losses.append(_checked_loss(params, x, spec, cid))

    return params - global_params, LocalStats(cid, n, epoch_losses[-1], epoch_losses)


def _checked_loss(params, x, spec, cid) -> float:
    if not np.all(np.isfinite(params)):
        raise TrainingError(cid, "non-finite parameters")
    value = loss(params, x, spec)
    if not np.isfinite(value):
        raise TrainingError(cid, "non-finite loss")
    return value
