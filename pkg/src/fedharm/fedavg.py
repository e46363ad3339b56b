"""Federated Averaging rounds: sample, broadcast, train locally, aggregate."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dp import AdaptiveClipState, DpConfig, clip_update, dp_aggregate, update_clip_norm
from .features import FeatureMatrix, featurize_examples
from .metrics import METRIC_NAMES, EvalReport, evaluate_scores
from .model import ModelSpec, TrainConfig, init_params, predict_proba
from .rng import derive_seed, substream
from .training import TrainingError, local_train

log = logging.getLogger(__name__)

SAMPLING_KINDS = ("fixed_cohort", "uniform_without_replacement", "poisson")


class FedAvgError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingPolicy:
    kind: str = "fixed_cohort"
    cohort: tuple[int, ...] = ()
    k: int = 0
    mean: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SAMPLING_KINDS:
            raise FedAvgError(f"sampling kind must be one of {SAMPLING_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "cohort", tuple(int(c) for c in self.cohort))
        if self.kind == "fixed_cohort" and len(set(self.cohort)) != len(self.cohort):
            raise FedAvgError("fixed cohort contains duplicate client ids")

    def validate(self, population_size: int) -> None:
        if self.kind == "uniform_without_replacement" and not 0 <= self.k <= population_size:
            raise FedAvgError(f"uniform k={self.k} exceeds population {population_size}")
        if self.kind == "poisson" and not 0 <= self.mean <= population_size:
            raise FedAvgError(f"poisson mean {self.mean} exceeds population {population_size}")

    def expected_cohort(self, population_size: int) -> float:
        if self.kind == "fixed_cohort":
            return float(len(self.cohort))
        if self.kind == "uniform_without_replacement":
            return float(self.k)
        return float(self.mean)

    def sampling_probability(self, population_size: int) -> float:
        """Per-client inclusion probability used for privacy accounting."""
        if self.kind == "fixed_cohort":
            return 1.0
        return self.expected_cohort(population_size) / population_size


def sample_clients(policy: SamplingPolicy, population, round_index: int) -> list[int]:
    """Participants for one round, in ascending id order; may be empty for poisson."""
    population = list(population)
    if not population:
        raise FedAvgError("empty client population")
    if policy.kind == "fixed_cohort":
        missing = set(policy.cohort) - set(population)
        if missing:
            raise FedAvgError(f"cohort ids not in population: {sorted(missing)[:10]}")
        return sorted(policy.cohort)
    policy.validate(len(population))
    rng = substream(policy.seed, "sampling", round_index)
    if policy.kind == "uniform_without_replacement":
        picked = rng.choice(len(population), size=policy.k, replace=False)
        return sorted(population[i] for i in picked)
    q = policy.mean / len(population)
    mask = rng.random(len(population)) < q
    return sorted(population[i] for i in np.flatnonzero(mask))


def aggregate(deltas, weights, client_ids=None) -> np.ndarray:
    """Weighted mean of deltas, reduced in ascending client-id order."""
    if len(deltas) == 0:
        raise FedAvgError("nothing to aggregate")
    if len(weights) != len(deltas):
        raise FedAvgError("one weight per delta required")
    order = range(len(deltas)) if client_ids is None else np.argsort(np.asarray(client_ids), kind="stable")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise FedAvgError("weights must be non-negative with at least one positive")
    dim = len(deltas[0])
    total = np.zeros(dim)
    for i in order:
        if len(deltas[i]) != dim:
            raise FedAvgError(f"delta {i} has dimension {len(deltas[i])}, expected {dim}")
        total += w[i] * deltas[i]
    return total / w.sum()


@dataclass
class RoundReport:
    round_index: int
    participant_ids: list[int]
    delta_norms: list[float]
    clipped_fraction: float
    update_norm: float
    skipped: bool = False
    mean_local_loss: float = float("nan")
    clip_norm: float | None = None
    noise_multiplier: float | None = None
    divisor: float | None = None
    noise_seed: int | None = None
    eval: EvalReport | None = None
    wall_time: float = 0.0
    next_clip_state: AdaptiveClipState | None = field(default=None, repr=False)

    @property
    def n_participants(self) -> int:
        return len(self.participant_ids)


@dataclass
class TrainingHistory:
    rounds: list[RoundReport]
    final_params: np.ndarray
    config: dict = field(default_factory=dict)

    def evaluations(self) -> list[RoundReport]:
        return [r for r in self.rounds if r.eval is not None]


def holdout_features(fd, spec: ModelSpec) -> FeatureMatrix:
    cache = getattr(fd, "_test_cache", {})
    key = spec.hash_dimension
    if key not in cache:
        cache[key] = featurize_examples(fd.test_set, spec.hash_dimension)
    return cache[key]


def evaluate(params: np.ndarray, x: FeatureMatrix, spec: ModelSpec, threshold: float = 0.5) -> EvalReport:
    return evaluate_scores(predict_proba(params, x, spec), x.labels, threshold)


def run_round(
    global_params: np.ndarray,
    fd,
    policy: SamplingPolicy,
    train_config: TrainConfig,
    dp: DpConfig | None,
    round_index: int,
    spec: ModelSpec,
    clip_state: AdaptiveClipState | None = None,
) -> tuple[np.ndarray, RoundReport]:
    """One FedAvg round.  Returns the new global parameters and the round report.

    With DP, each delta is clipped to the current clip norm, the clipped sum
    is noised and divided (see ``dp_aggregate``).  With adaptive clipping the
    next clip state is carried in ``report.next_clip_state``.
    """
    start = time.perf_counter()
    if global_params.shape != (spec.n_params,):
        raise FedAvgError(f"global parameters have shape {global_params.shape}, expected ({spec.n_params},)")
    population = fd.population
    ids = sample_clients(policy, population, round_index)
    if dp is not None and clip_state is None:
        clip_state = dp.initial_clip_state()

    if not ids:
        report = RoundReport(round_index, [], [], 0.0, 0.0, skipped=True, next_clip_state=clip_state)
        if dp is not None:
            report.clip_norm = clip_state.current_clip
            report.noise_multiplier = dp.noise_multiplier
        report.wall_time = time.perf_counter() - start
        log.debug("round %d: empty cohort, skipped", round_index)
        return global_params.copy(), report

    round_cfg = replace(train_config, seed=derive_seed(train_config.seed, "shuffle", round_index))
    deltas, weights, losses = [], [], []
    for cid in ids:
        try:
            delta, stats = local_train(global_params, fd.client(cid), round_cfg, spec)
        except TrainingError as exc:
            raise TrainingError(cid, f"round {round_index}: {exc.detail}") from exc
        deltas.append(delta)
        weights.append(stats.n_examples)
        losses.append(stats.final_loss)
    norms = [float(np.linalg.norm(d)) for d in deltas]

    if dp is None:
        update = aggregate(deltas, weights, ids)
        report = RoundReport(round_index, ids, norms, 0.0, 0.0)
    else:
        clip = clip_state.current_clip
        clipped, within = [], []
        for d in deltas:
            c, bit = clip_update(d, clip)
            clipped.append(c)
            within.append(bit)
        expected = policy.expected_cohort(len(population))
        mode = dp.divisor_mode
        if mode == "auto":
            mode = "expected_cohort" if policy.kind == "poisson" else "actual_cohort"
        divisor = expected if mode == "expected_cohort" else float(len(ids))
        noise_seed = derive_seed(dp.seed, "noise", round_index)
        update = dp_aggregate(
            clipped, clip, dp.noise_multiplier, divisor, np.random.default_rng(noise_seed), len(global_params)
        )
        next_state = clip_state
        if dp.adaptive is not None:
            next_state = update_clip_norm(
                clip_state, within, dp.adaptive, expected, substream(dp.seed, "clip", round_index)
            )
        report = RoundReport(
            round_index, ids, norms, 1.0 - sum(within) / len(within), 0.0,
            clip_norm=clip, noise_multiplier=dp.noise_multiplier, divisor=divisor,
            noise_seed=noise_seed, next_clip_state=next_state,
        )

    report.update_norm = float(np.linalg.norm(update))
    report.mean_local_loss = float(np.mean(losses))
    report.wall_time = time.perf_counter() - start
    return global_params + update, report


def run_training(
    fd,
    rounds: int,
    policy: SamplingPolicy,
    train_config: TrainConfig,
    dp: DpConfig | None,
    eval_every: int,
    spec: ModelSpec,
    initial_params: np.ndarray | None = None,
    threshold: float = 0.5,
) -> TrainingHistory:
    """Apply ``rounds`` FedAvg rounds; evaluate every ``eval_every`` rounds and at the end.

    Rounds are numbered from 1.
    """
    if rounds < 1:
        raise FedAvgError("rounds must be >= 1")
    if eval_every < 1:
        raise FedAvgError("eval_every must be >= 1")
    params = init_params(spec) if initial_params is None else initial_params.copy()
    x_test = holdout_features(fd, spec) if len(fd.test_indices) else None
    clip_state = dp.initial_clip_state() if dp is not None else None
    reports = []
    for r in range(1, rounds + 1):
        params, report = run_round(params, fd, policy, train_config, dp, r, spec, clip_state)
        clip_state = report.next_clip_state
        if x_test is not None and (r % eval_every == 0 or r == rounds):
            report.eval = evaluate(params, x_test, spec, threshold)
        reports.append(report)
        log.info(
            "round %d: %d clients, update norm %.4g%s", r, report.n_participants, report.update_norm,
            f", auc {report.eval.auc:.4f}" if report.eval else "",
        )
    return TrainingHistory(reports, params, {"rounds": rounds, "eval_every": eval_every})


# --------------------------------------------------------------------------
# round log

ROUND_LOG_COLUMNS = (
    "round", "n_participants", "skipped", "mean_delta_norm", "max_delta_norm",
    "clipped_fraction", "update_norm", "mean_local_loss", "clip_norm",
    "noise_multiplier", "divisor", "noise_seed",
) + METRIC_NAMES


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def round_log_rows(history: TrainingHistory) -> list[dict]:
    rows = []
    for r in history.rounds:
        row = {
            "round": r.round_index,
            "n_participants": r.n_participants,
            "skipped": r.skipped,
            "mean_delta_norm": float(np.mean(r.delta_norms)) if r.delta_norms else None,
            "max_delta_norm": float(np.max(r.delta_norms)) if r.delta_norms else None,
            "clipped_fraction": r.clipped_fraction,
            "update_norm": r.update_norm,
            "mean_local_loss": None if r.skipped else r.mean_local_loss,
            "clip_norm": r.clip_norm,
            "noise_multiplier": r.noise_multiplier,
            "divisor": r.divisor,
            "noise_seed": r.noise_seed,
        }
        for name in METRIC_NAMES:
            row[name] = getattr(r.eval, name) if r.eval is not None else None
        rows.append(row)
    return rows


def write_round_log(history: TrainingHistory, path: str | Path) -> None:
    """Deterministic per-round CSV; wall times go to a ``*_timing.csv`` sibling."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROUND_LOG_COLUMNS)
        for row in round_log_rows(history):
            w.writerow([_fmt(row[c]) for c in ROUND_LOG_COLUMNS])
    timing = path.with_name(path.stem + "_timing.csv")
    with timing.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("round", "wall_time"))
        for r in history.rounds:
            w.writerow((r.round_index, f"{r.wall_time:.6f}"))


def read_round_log(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
