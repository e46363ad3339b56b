"""Flat ``section.key = value`` experiment configuration.

Blank lines and lines starting with ``#`` are ignored.  Every key except
``dataset.path`` has a default (see ``KEYS``); unknown keys are rejected.
``serialize`` writes every key in sorted order, so parse/serialize/parse is
the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .accountant import CONVERSIONS
from .dp import DIVISOR_MODES, AdaptiveClipParams, DpConfig
from .fedavg import SAMPLING_KINDS, SamplingPolicy
from .ingest import PRESET_SCHEMAS, LabelSchema, load_stopwords
from .model import KINDS, ModelSpec, TrainConfig
from .partition import PartitionSpec
from .rng import derive_seed, substream


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    type: type
    default: Any
    check: Callable[[Any], bool] | None = None
    constraint: str = ""
    help: str = ""


def _in(*choices):
    return lambda v: v in choices


def _open01(v):
    return 0.0 < v < 1.0


REQUIRED = object()

KEYS: dict[str, Key] = {
    "dataset.path": Key(str, REQUIRED, help="delimited corpus file with a header row"),
    "dataset.delimiter": Key(str, ",", lambda v: len(v) == 1 or v in ("tab", "\\t"),
                             "a single character or 'tab'"),
    "dataset.text_column": Key(str, "text"),
    "dataset.label_column": Key(str, "label"),
    "dataset.id_column": Key(str, "", help="empty: use the row index"),
    "dataset.preset": Key(str, "binary", _in(*PRESET_SCHEMAS), f"one of {sorted(PRESET_SCHEMAS)}"),
    "dataset.harmful_labels": Key(str, "", help="comma list; overrides the preset when set"),
    "dataset.normal_labels": Key(str, ""),
    "dataset.dropped_labels": Key(str, ""),
    "dataset.stopwords": Key(str, "default", help="'default', 'none' or a path"),
    "dataset.remove_hapax": Key(bool, True),
    "dataset.strict_labels": Key(bool, True),

    "partition.test_fraction": Key(float, 0.10, _open01, "in (0, 1)"),
    "partition.test_harmful_ratio": Key(float, 0.08, _open01, "in (0, 1)"),
    "partition.client_size": Key(int, 100, lambda v: v >= 2, ">= 2"),
    "partition.client_harmful_ratio": Key(float, 0.5, lambda v: 0.0 < v <= 1.0, "in (0, 1]"),
    "partition.n_clients": Key(int, 50, lambda v: v >= 0, ">= 0 (0 builds the maximum)"),

    "model.kind": Key(str, "logistic_regression", _in(*KINDS), f"one of {KINDS}"),
    "model.hash_dimension": Key(int, 1 << 15, lambda v: v > 0 and not v & (v - 1), "a power of two"),
    "model.hidden_units": Key(int, 32, lambda v: v >= 1, ">= 1"),
    "model.dropout": Key(float, 0.0, lambda v: 0.0 <= v < 1.0, "in [0, 1)"),

    "train.epochs": Key(int, 7, lambda v: v >= 1, ">= 1"),
    "train.batch_size": Key(int, 10, lambda v: v >= 1, ">= 1"),
    "train.learning_rate": Key(float, 0.001, lambda v: v >= 0, ">= 0"),
    "train.adam_beta1": Key(float, 0.9, lambda v: 0.0 <= v < 1.0, "in [0, 1)"),
    "train.adam_beta2": Key(float, 0.999, lambda v: 0.0 <= v < 1.0, "in [0, 1)"),
    "train.adam_epsilon": Key(float, 1e-8, lambda v: v > 0, "> 0"),

    "sampling.kind": Key(str, "fixed_cohort", _in(*SAMPLING_KINDS), f"one of {SAMPLING_KINDS}"),
    "sampling.cohort_size": Key(int, 0, lambda v: v >= 0, ">= 0",
                                "fixed_cohort: size of the randomly chosen cohort (0: every client)"),
    "sampling.k": Key(int, 10, lambda v: v >= 1, ">= 1"),
    "sampling.mean": Key(float, 25.0, lambda v: v > 0, "> 0"),

    "dp.enabled": Key(bool, False),
    "dp.noise_multiplier": Key(float, 1.0, lambda v: v >= 0, ">= 0"),
    "dp.clip_mode": Key(str, "fixed", _in("fixed", "adaptive"), "'fixed' or 'adaptive'"),
    "dp.clip_norm": Key(float, 0.1, lambda v: v > 0, "> 0"),
    "dp.delta": Key(float, 0.0, lambda v: 0.0 <= v < 1.0, "in [0, 1) (0: 1 / number of clients)"),
    "dp.divisor_mode": Key(str, "auto", _in(*DIVISOR_MODES), f"one of {DIVISOR_MODES}"),
    "dp.initial_clip": Key(float, 0.1, lambda v: v > 0, "> 0"),
    "dp.target_quantile": Key(float, 0.5, _open01, "in (0, 1)"),
    "dp.clip_learning_rate": Key(float, 0.2, lambda v: v > 0, "> 0"),
    "dp.quantile_noise": Key(float, -1.0, help="negative: expected cohort / 20"),
    "dp.conversion": Key(str, "improved", _in(*CONVERSIONS), f"one of {CONVERSIONS}"),

    "experiment.rounds": Key(int, 20, lambda v: v >= 1, ">= 1"),
    "experiment.repetitions": Key(int, 1, lambda v: v >= 1, ">= 1"),
    "experiment.eval_every": Key(int, 1, lambda v: v >= 1, ">= 1"),
    "experiment.master_seed": Key(int, 0),
    "experiment.output_dir": Key(str, "runs"),
    "experiment.threshold": Key(float, 0.5, _open01, "in (0, 1)"),
    "experiment.centralized_baseline": Key(bool, False),
    "experiment.baseline_harmful_ratio": Key(float, -1.0, lambda v: v < 0 or 0.0 < v <= 1.0,
                                             "in (0, 1], or negative for the client ratio"),
}


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _convert(key: str, raw: str) -> Any:
    spec = KEYS[key]
    raw = raw.strip()
    try:
        if spec.type is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if spec.type is int:
            return int(raw, 0)
        if spec.type is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {spec.type.__name__}") from None
    return raw


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    # --- seeds -------------------------------------------------------------
    def repetition_seed(self, rep: int, module: int) -> int:
        """Sub-seed for ``module`` (0 partition, 1 model, 2 train, 3 sampling, 4 dp)."""
        return derive_seed(self["experiment.master_seed"], "repetition", rep, module)

    # --- typed views ---------------------------------------------------------
    def label_schema(self) -> LabelSchema:
        harm = _split(self["dataset.harmful_labels"])
        if harm:
            return LabelSchema(harm, _split(self["dataset.normal_labels"]), _split(self["dataset.dropped_labels"]))
        return PRESET_SCHEMAS[self["dataset.preset"]]

    def stopwords(self) -> frozenset[str]:
        sw = self["dataset.stopwords"]
        if sw == "none":
            return frozenset()
        return load_stopwords(None if sw == "default" else sw)

    def delimiter(self) -> str:
        d = self["dataset.delimiter"]
        return "\t" if d in ("tab", "\\t") else d

    def partition_spec(self, rep: int = 0) -> PartitionSpec:
        return PartitionSpec(
            client_size=self["partition.client_size"],
            client_harmful_ratio=self["partition.client_harmful_ratio"],
            test_fraction=self["partition.test_fraction"],
            test_harmful_ratio=self["partition.test_harmful_ratio"],
            seed=self.repetition_seed(rep, 0),
        )

    def model_spec(self, rep: int = 0) -> ModelSpec:
        return ModelSpec(
            kind=self["model.kind"],
            hash_dimension=self["model.hash_dimension"],
            hidden_units=self["model.hidden_units"],
            dropout=self["model.dropout"],
            init_seed=self.repetition_seed(rep, 1),
        )

    def train_config(self, rep: int = 0) -> TrainConfig:
        return TrainConfig(
            epochs=self["train.epochs"],
            batch_size=self["train.batch_size"],
            learning_rate=self["train.learning_rate"],
            adam_beta1=self["train.adam_beta1"],
            adam_beta2=self["train.adam_beta2"],
            adam_epsilon=self["train.adam_epsilon"],
            seed=self.repetition_seed(rep, 2),
        )

    def sampling_policy(self, population: list[int], rep: int = 0) -> SamplingPolicy:
        seed = self.repetition_seed(rep, 3)
        kind = self["sampling.kind"]
        if kind == "fixed_cohort":
            size = self["sampling.cohort_size"] or len(population)
            if size > len(population):
                raise ConfigError(
                    f"sampling.cohort_size: {size} exceeds the {len(population)} available clients"
                )
            cohort = substream(seed, "sampling", 0).choice(population, size=size, replace=False)
            return SamplingPolicy(kind, cohort=tuple(sorted(int(c) for c in cohort)), seed=seed)
        if kind == "uniform_without_replacement":
            if self["sampling.k"] > len(population):
                raise ConfigError(f"sampling.k: {self['sampling.k']} exceeds population {len(population)}")
            return SamplingPolicy(kind, k=self["sampling.k"], seed=seed)
        if self["sampling.mean"] > len(population):
            raise ConfigError(f"sampling.mean: {self['sampling.mean']} exceeds population {len(population)}")
        return SamplingPolicy(kind, mean=self["sampling.mean"], seed=seed)

    def dp_config(self, n_clients: int, rep: int = 0) -> DpConfig | None:
        if not self["dp.enabled"]:
            return None
        adaptive = None
        if self["dp.clip_mode"] == "adaptive":
            qn = self["dp.quantile_noise"]
            adaptive = AdaptiveClipParams(
                initial_clip=self["dp.initial_clip"],
                target_quantile=self["dp.target_quantile"],
                clip_learning_rate=self["dp.clip_learning_rate"],
                quantile_noise=None if qn < 0 else qn,
            )
        return DpConfig(
            noise_multiplier=self["dp.noise_multiplier"],
            clip_norm=self["dp.clip_norm"],
            adaptive=adaptive,
            delta=self.delta(n_clients),
            divisor_mode=self["dp.divisor_mode"],
            seed=self.repetition_seed(rep, 4),
        )

    def delta(self, n_clients: int) -> float:
        d = self["dp.delta"]
        if d > 0:
            return d
        if n_clients < 2:
            raise ConfigError("dp.delta: cannot default to 1/n_clients with fewer than 2 clients")
        return 1.0 / n_clients


def _split(text: str) -> frozenset[str]:
    return frozenset(t.strip() for t in text.split(",") if t.strip())


def parse_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    return from_mapping(values)


def from_mapping(values: dict[str, Any]) -> ExperimentConfig:
    """Fill defaults, type-check and validate a key -> value mapping."""
    full = {}
    for key, spec in KEYS.items():
        if key in values:
            value = values[key]
            if isinstance(value, str) and spec.type is not str:
                value = _convert(key, value)
            elif spec.type is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, spec.type) or (spec.type is int and isinstance(value, bool)):
                raise ConfigError(f"{key}: expected {spec.type.__name__}, got {value!r}")
        elif spec.default is REQUIRED:
            raise ConfigError(f"{key}: required key missing")
        else:
            value = spec.default
        if spec.check is not None and not spec.check(value):
            raise ConfigError(f"{key}: {value!r} violates constraint: {spec.constraint}")
        full[key] = value
    unknown = set(values) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s): {sorted(unknown)}")
    cfg = ExperimentConfig(full)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ExperimentConfig) -> None:
    if cfg["dataset.harmful_labels"] and not cfg["dataset.normal_labels"]:
        raise ConfigError("dataset.normal_labels: required when dataset.harmful_labels is set")
    try:
        cfg.label_schema()
    except ValueError as exc:
        raise ConfigError(f"dataset.harmful_labels: {exc}") from None
    if cfg.partition_spec().harmful_per_client == 0:
        raise ConfigError(
            "partition.client_harmful_ratio: rounds to zero harmful examples per client at this client_size"
        )


def with_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``key=value`` strings on top of ``cfg``."""
    values = dict(cfg.values)
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"override {item!r}: expected key=value")
        if key not in KEYS:
            raise ConfigError(f"override: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return from_mapping(values)


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_text(path.read_text(encoding="utf-8"), str(path))


def serialize(cfg: ExperimentConfig) -> str:
    return "".join(f"{key} = {_format(cfg[key])}\n" for key in sorted(KEYS))


def reference() -> str:
    """Human-readable key reference (used by ``fedharm config-keys``)."""
    lines = []
    for key in sorted(KEYS):
        spec = KEYS[key]
        default = "(required)" if spec.default is REQUIRED else _format(spec.default)
        extra = "; ".join(x for x in (spec.constraint, spec.help) if x)
        lines.append(f"{key:36s} {spec.type.__name__:6s} {default:22s} {extra}")
    return "\n".join(lines)
