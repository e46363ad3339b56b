"""Model contract: flat parameter vectors, prediction, BCE gradients, Adam.

Two reference models share the contract.  ``logistic_regression`` has
``D + 1`` parameters (weights then bias).  ``one_hidden_layer`` is a tanh
layer of ``H`` units followed by one sigmoid output; its parameters are laid
out as ``[W1 (H x D, row-major), b1 (H), w2 (H), b2]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FeatureMatrix, FeatureVector, stack
from .kernels import lr_scores, sigmoid
from .rng import substream

_TINY = np.finfo(float).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)

KINDS = ("logistic_regression", "one_hidden_layer")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "logistic_regression"
    hash_dimension: int = 1 << 15
    hidden_units: int = 32
    dropout: float = 0.0
    init_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"model kind must be one of {KINDS}, got {self.kind!r}")
        d = self.hash_dimension
        if d <= 0 or d & (d - 1):
            raise ModelError(f"hash_dimension must be a power of two, got {d}")
        if self.hidden_units < 1:
            raise ModelError("hidden_units must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def n_params(self) -> int:
        if self.kind == "logistic_regression":
            return self.hash_dimension + 1
        h = self.hidden_units
        return h * self.hash_dimension + 2 * h + 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 7
    batch_size: int = 10
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ModelError("learning_rate must be non-negative")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def init_params(spec: ModelSpec) -> np.ndarray:
    if spec.kind == "logistic_regression":
        return np.zeros(spec.n_params)
    h, d = spec.hidden_units, spec.hash_dimension
    rng = substream(spec.init_seed, "init")
    w1 = rng.uniform(-1.0, 1.0, size=h * d) / math.sqrt(d)
    w2 = rng.uniform(-1.0, 1.0, size=h) / math.sqrt(h)
    return np.concatenate([w1, np.zeros(h), w2, np.zeros(1)])


def _as_matrix(x, spec: ModelSpec) -> FeatureMatrix:
    if isinstance(x, FeatureMatrix):
        m = x
    elif isinstance(x, FeatureVector):
        m = stack([x], [0.0], x.dimension)
    else:
        raise TypeError(f"expected FeatureVector or FeatureMatrix, got {type(x).__name__}")
    if m.dimension != spec.hash_dimension:
        raise ModelError(f"feature dimension {m.dimension} != model hash_dimension {spec.hash_dimension}")
    return m


def _check_params(params: np.ndarray, spec: ModelSpec) -> None:
    if params.shape != (spec.n_params,):
        raise ModelError(f"parameter vector has shape {params.shape}, expected ({spec.n_params},)")


def _unpack_hidden(params, spec):
    h, d = spec.hidden_units, spec.hash_dimension
    w1 = params[: h * d].reshape(h, d)
    b1 = params[h * d: h * d + h]
    w2 = params[h * d + h: h * d + 2 * h]
    return w1, b1, w2, params[-1]


def _hidden_forward(params, m: FeatureMatrix, spec, mask=None):
    w1, b1, w2, b2 = _unpack_hidden(params, spec)
    n = m.n_rows
    rows = np.repeat(np.arange(n), np.diff(m.indptr))
    # pre[i, :] = sum_p W1[:, idx_p] * val_p over the nonzeros of row i
    contrib = w1[:, m.indices] * m.data
    pre = np.zeros((n, spec.hidden_units))
    np.add.at(pre, rows, contrib.T)
    hid = np.tanh(pre + b1)
    act = hid if mask is None else hid * mask
    return hid, act, act @ w2 + b2, rows


def scores(params: np.ndarray, x, spec: ModelSpec) -> np.ndarray:
    """Pre-sigmoid scores for every row of ``x``."""
    _check_params(params, spec)
    m = _as_matrix(x, spec)
    if spec.kind == "logistic_regression":
        return lr_scores(params, m.indptr, m.indices, m.data)
    return _hidden_forward(params, m, spec)[2]


def predict_proba(params: np.ndarray, x, spec: ModelSpec) -> np.ndarray:
    # Clamped so the output stays strictly inside (0, 1) even when exp saturates.
    return np.clip(sigmoid(scores(params, x, spec)), _TINY, _BELOW_ONE)


def predict(params: np.ndarray, x: FeatureVector, spec: ModelSpec) -> float:
    return float(predict_proba(params, x, spec)[0])


def bce_from_scores(s: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy computed from logits."""
    s = np.asarray(s, dtype=float)
    return float(np.mean(np.logaddexp(0.0, s) - y * s))


def loss(params: np.ndarray, m: FeatureMatrix, spec: ModelSpec) -> float:
    return bce_from_scores(scores(params, m, spec), m.labels)


def batch_matrix(batch: Sequence[tuple[FeatureVector, float]], spec: ModelSpec) -> FeatureMatrix:
    if not batch:
        raise ModelError("gradient needs a non-empty batch")
    return stack([fv for fv, _ in batch], [y for _, y in batch], spec.hash_dimension)


def gradient(params: np.ndarray, batch, spec: ModelSpec, dropout_mask=None) -> np.ndarray:
    """Mean BCE gradient over a batch of ``(FeatureVector, label)`` pairs or a FeatureMatrix."""
    _check_params(params, spec)
    m = batch if isinstance(batch, FeatureMatrix) else batch_matrix(batch, spec)
    if m.n_rows == 0:
        raise ModelError("gradient needs a non-empty batch")
    m = _as_matrix(m, spec)
    n = m.n_rows
    if spec.kind == "logistic_regression":
        d = spec.hash_dimension
        s = lr_scores(params, m.indptr, m.indices, m.data)
        r = (sigmoid(s) - m.labels) / n
        rows = np.repeat(np.arange(n), np.diff(m.indptr))
        g = np.bincount(m.indices, weights=r[rows] * m.data, minlength=d + 1)
        g[d] += r.sum()
    else:
        w1, b1, w2, b2 = _unpack_hidden(params, spec)
        hid, act, s, rows = _hidden_forward(params, m, spec, dropout_mask)
        r = (sigmoid(s) - m.labels) / n
        g_w2 = act.T @ r
        d_act = np.outer(r, w2)
        if dropout_mask is not None:
            d_act = d_act * dropout_mask
        d_pre = d_act * (1.0 - hid * hid)
        g_w1 = np.zeros_like(w1)
        np.add.at(g_w1.T, m.indices, d_pre[rows] * m.data[:, None])
        g = np.concatenate([g_w1.ravel(), d_pre.sum(axis=0), g_w2, [r.sum()]])
    if not np.all(np.isfinite(g)):
        raise ModelError("non-finite gradient")
    return g


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, config: TrainConfig):
    """Bias-corrected Adam update; returns new (params, state) without mutating inputs."""
    if state.m.shape != params.shape or grad.shape != params.shape:
        raise ModelError("Adam state / gradient shape does not match parameters")
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    t = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * (grad * grad)
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new = params - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + eps)
    return new, AdamState(m, v, t)


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(params: np.ndarray, path: str | Path, spec: ModelSpec | None = None, **meta) -> None:
    """Write ``<int64 dimension><float64 little-endian values>`` plus a JSON sidecar."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(np.int64(len(params)).astype("<i8").tobytes())
        fh.write(np.asarray(params, dtype="<f8").tobytes())
    side = {"dimension": int(len(params)), **meta}
    if spec is not None:
        side["model"] = {k: getattr(spec, k) for k in spec.__dataclass_fields__}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ModelError(f"{path}: truncated checkpoint")
    dim = int(np.frombuffer(raw[:8], dtype="<i8")[0])
    if len(raw) != 8 + 8 * dim:
        raise ModelError(f"{path}: header says {dim} values, file holds {(len(raw) - 8) // 8}")
    return np.frombuffer(raw[8:], dtype="<f8").astype(float)


def load_checkpoint_spec(path: str | Path) -> ModelSpec | None:
    side = Path(str(path) + ".json")
    if not side.exists():
        return None
    meta = json.loads(side.read_text())
    return ModelSpec(**meta["model"]) if "model" in meta else None


@dataclass
class LocalStats:
    client_id: int
    n_examples: int
    final_loss: float
    epoch_losses: list[float] = field(default_factory=list)
