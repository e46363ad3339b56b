"""Config-driven experiment runner and result files.

Layout under ``experiment.output_dir``::

    config.txt                  resolved configuration
    summary.csv                 mean/std of the final-round metrics
    rep_<r>/round_log.csv       per-round log (deterministic)
    rep_<r>/round_log_timing.csv
    rep_<r>/partition.manifest
    rep_<r>/final_params.bin    (+ .json sidecar)
    rep_<r>/accountant.txt      only when DP is on
    rep_<r>/centralized_round_log.csv   only with experiment.centralized_baseline
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .accountant import DEFAULT_ORDERS, compute_epsilon, epsilons, rdp_subsampled_gaussian
from .config import ExperimentConfig, serialize
from .fedavg import SamplingPolicy, TrainingHistory, run_training, write_round_log
from .ingest import Corpus, build_corpus, load_corpus
from .metrics import METRIC_NAMES
from .model import save_checkpoint
from .partition import FederatedDataset, PartitionSpec, build_clients, partition, split_test, write_manifest

log = logging.getLogger(__name__)

ADAPTIVE_NOTE = "epsilon excludes clip-adaptation cost"


class ExperimentError(RuntimeError):
    pass


@dataclass
class SummaryRow:
    kind: str
    metric: str
    values: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        # sample std; a single repetition reports 0 by convention
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0


@dataclass
class ExperimentResult:
    output_dir: Path
    histories: list[TrainingHistory]
    summary: list[SummaryRow]
    baselines: list[TrainingHistory] = field(default_factory=list)
    privacy: list[dict] = field(default_factory=list)

    def row(self, metric: str, kind: str = "federated") -> SummaryRow:
        for r in self.summary:
            if r.kind == kind and r.metric == metric:
                return r
        raise KeyError((kind, metric))


def load_config_corpus(cfg: ExperimentConfig) -> Corpus:
    records = load_corpus(
        cfg["dataset.path"],
        cfg.label_schema(),
        text_column=cfg["dataset.text_column"],
        label_column=cfg["dataset.label_column"],
        id_column=cfg["dataset.id_column"] or None,
        delimiter=cfg.delimiter(),
        strict=cfg["dataset.strict_labels"],
    )
    corpus = build_corpus(records, cfg.label_schema(), cfg.stopwords(), cfg["dataset.remove_hapax"])
    log.info("loaded %d examples (%d harmful)", len(corpus.examples), corpus.class_counts.get(1, 0))
    return corpus


def accountant_report(policy: SamplingPolicy, n_clients: int, noise_multiplier: float, steps: int,
                      delta: float, method: str = "improved", adaptive: bool = False,
                      orders=DEFAULT_ORDERS) -> dict:
    q = policy.sampling_probability(n_clients)
    rdp = rdp_subsampled_gaussian(q, noise_multiplier, steps, orders)
    per_order = epsilons(rdp, orders, delta, method)
    spec = compute_epsilon(q, noise_multiplier, steps, delta, orders, method)
    out = {
        "sampling_probability": q,
        "noise_multiplier": noise_multiplier,
        "steps": steps,
        "delta": delta,
        "conversion": method,
        "epsilon": spec.epsilon,
        "optimal_order": spec.optimal_order,
        "orders": list(orders),
        "rdp": [float(r) for r in rdp],
        "per_order_epsilon": [float(e) for e in per_order],
    }
    if adaptive:
        out["note"] = ADAPTIVE_NOTE
    return out


def write_accountant_report(report: dict, path: str | Path) -> None:
    """Key-value header followed by an ``order rdp epsilon`` table."""
    with Path(path).open("w") as fh:
        for key in ("sampling_probability", "noise_multiplier", "steps", "delta", "conversion",
                    "epsilon", "optimal_order", "note"):
            if key in report:
                fh.write(f"{key} = {_fmt(report[key])}\n")
        fh.write("\norder\trdp\tepsilon\n")
        for a, r, e in zip(report["orders"], report["rdp"], report["per_order_epsilon"]):
            fh.write(f"{a:g}\t{_fmt(r)}\t{_fmt(e)}\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return str(v)


def centralized_dataset(fd: FederatedDataset, size: int, harmful_ratio: float, seed: int) -> FederatedDataset:
    """One client holding ``size`` examples drawn from the training pool of ``fd``.

    The draw uses the partitioner with a single client, so it is disjoint
    from the test set and its class ratio is exact.
    """
    spec = PartitionSpec(
        client_size=size,
        client_harmful_ratio=harmful_ratio,
        test_fraction=fd.spec.test_fraction,
        test_harmful_ratio=fd.spec.test_harmful_ratio,
        seed=seed,
    )
    _, pool = split_test(fd.corpus, fd.spec)
    shards = build_clients(fd.corpus, pool, spec, 1)
    return FederatedDataset(fd.corpus, fd.test_indices, shards, spec)


def final_metrics(history: TrainingHistory) -> dict[str, float]:
    evals = history.evaluations()
    if not evals:
        raise ExperimentError("run produced no evaluation (empty test set?)")
    last = evals[-1].eval
    return {m: float(getattr(last, m)) for m in METRIC_NAMES}


def run_repetition(cfg: ExperimentConfig, corpus: Corpus, rep: int, out: Path | None):
    pspec = cfg.partition_spec(rep)
    n = cfg["partition.n_clients"] or None
    fd = partition(corpus, pspec, n)
    mspec = cfg.model_spec(rep)
    tcfg = cfg.train_config(rep)
    policy = cfg.sampling_policy(fd.population, rep)
    dp = cfg.dp_config(len(fd.clients), rep)
    rounds = cfg["experiment.rounds"]
    log.info("rep %d: %d clients, %d test examples", rep, len(fd.clients), len(fd.test_indices))
    history = run_training(
        fd, rounds, policy, tcfg, dp, cfg["experiment.eval_every"], mspec,
        threshold=cfg["experiment.threshold"],
    )
    privacy = None
    if dp is not None:
        privacy = accountant_report(
            policy, len(fd.clients), dp.noise_multiplier, rounds, dp.delta,
            cfg["dp.conversion"], adaptive=dp.adaptive is not None,
        )
    baseline = None
    if cfg["experiment.centralized_baseline"]:
        ratio = cfg["experiment.baseline_harmful_ratio"]
        if ratio < 0:
            ratio = pspec.client_harmful_ratio
        cfd = centralized_dataset(fd, len(fd.clients) * pspec.client_size, ratio, pspec.seed)
        single = SamplingPolicy("fixed_cohort", cohort=(0,))
        baseline = run_training(
            cfd, rounds, single, tcfg, None, cfg["experiment.eval_every"], mspec,
            threshold=cfg["experiment.threshold"],
        )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_round_log(history, out / "round_log.csv")
        write_manifest(fd, out / "partition.manifest")
        save_checkpoint(history.final_params, out / "final_params.bin", mspec,
                        master_seed=cfg["experiment.master_seed"], repetition=rep)
        if privacy is not None:
            write_accountant_report(privacy, out / "accountant.txt")
        if baseline is not None:
            write_round_log(baseline, out / "centralized_round_log.csv")
    return history, baseline, privacy


def run_experiment(cfg: ExperimentConfig, corpus: Corpus | None = None, write: bool = True) -> ExperimentResult:
    """Run every repetition, write the per-run files and the summary."""
    if corpus is None:
        corpus = load_config_corpus(cfg)
    out = Path(cfg["experiment.output_dir"])
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(serialize(cfg))
    histories, baselines, privacy = [], [], []
    for rep in range(cfg["experiment.repetitions"]):
        try:
            h, b, p = run_repetition(cfg, corpus, rep, out / f"rep_{rep}" if write else None)
        except Exception as exc:
            raise ExperimentError(f"repetition {rep}: {exc}") from exc
        histories.append(h)
        if b is not None:
            baselines.append(b)
        if p is not None:
            privacy.append(p)
    summary = summarize({"federated": histories, "centralized": baselines})
    result = ExperimentResult(out, histories, summary, baselines, privacy)
    if write:
        write_summary(summary, out / "summary.csv")
    return result


def summarize(groups: dict[str, list[TrainingHistory]]) -> list[SummaryRow]:
    rows = []
    for kind, histories in groups.items():
        if not histories:
            continue
        finals = [final_metrics(h) for h in histories]
        for m in METRIC_NAMES:
            rows.append(SummaryRow(kind, m, [f[m] for f in finals]))
    return rows


SUMMARY_COLUMNS = ("kind", "metric", "n", "mean", "std", "values")


def write_summary(rows: list[SummaryRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow((r.kind, r.metric, len(r.values), repr(r.mean), repr(r.std),
                        ";".join(repr(v) for v in r.values)))


def read_summary(path: str | Path) -> list[SummaryRow]:
    with Path(path).open(newline="") as fh:
        return [
            SummaryRow(row["kind"], row["metric"], [float(v) for v in row["values"].split(";")])
            for row in csv.DictReader(fh)
        ]
