import numpy as np
import pytest

from fedharm.config import parse_text, with_overrides
from fedharm.experiment import ExperimentError, read_summary, run_experiment
from fedharm.fedavg import read_round_log
from fedharm.metrics import METRIC_NAMES
from fedharm.model import load_checkpoint
from fedharm.partition import read_manifest
from fedharm.synth import SynthSpec, write_synthetic_csv


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "synth.csv"
    write_synthetic_csv(SynthSpec(n_examples=8000, seed=21), p)
    return p


def config(data_csv, out, extra=""):
    return parse_text(f"""dataset.path = {data_csv}
partition.n_clients = 12
partition.client_size = 50
model.hash_dimension = 1024
train.epochs = 2
experiment.rounds = 3
experiment.output_dir = {out}
{extra}""")


def test_outputs_and_summary_consistency(data_csv, tmp_path):
    cfg = config(data_csv, tmp_path / "run", "experiment.repetitions = 3\nexperiment.master_seed = 5\n")
    res = run_experiment(cfg)
    out = tmp_path / "run"
    assert (out / "config.txt").exists() and (out / "summary.csv").exists()
    rows = read_summary(out / "summary.csv")
    assert [r.metric for r in rows] == list(METRIC_NAMES)
    for r in rows:
        finals = [float(read_round_log(out / f"rep_{k}" / "round_log.csv")[-1][r.metric]) for k in range(3)]
        assert r.values == finals
        assert r.mean == pytest.approx(np.mean(finals)) and r.std == pytest.approx(np.std(finals, ddof=1))
    assert res.row("auc").values == rows[0].values
    for k in range(3):
        rep = out / f"rep_{k}"
        assert load_checkpoint(rep / "final_params.bin").shape == (1025,)
        assert not (rep / "accountant.txt").exists()
    # repetitions use different partitions
    m0 = (out / "rep_0" / "partition.manifest").read_text()
    m1 = (out / "rep_1" / "partition.manifest").read_text()
    assert m0 != m1


def test_manifest_reconstructs_partition(data_csv, tmp_path):
    from fedharm.experiment import load_config_corpus
    from fedharm.partition import partition

    cfg = config(data_csv, tmp_path / "run")
    run_experiment(cfg)
    corpus = load_config_corpus(cfg)
    fd = read_manifest(tmp_path / "run" / "rep_0" / "partition.manifest", corpus)
    ref = partition(corpus, fd.spec, 12)
    for a, b in zip(fd.clients, ref.clients):
        np.testing.assert_array_equal(a.indices, b.indices)


def test_single_repetition_std_zero(data_csv, tmp_path):
    res = run_experiment(config(data_csv, tmp_path / "r"))
    assert all(r.std == 0.0 and len(r.values) == 1 for r in res.summary)


def test_five_repetitions_structure(data_csv, tmp_path):
    res = run_experiment(config(data_csv, tmp_path / "r", "experiment.repetitions = 5\n"), write=False)
    assert len(res.row("auc").values) == 5
    assert not (tmp_path / "r").exists()


def test_dp_run_is_byte_reproducible(data_csv, tmp_path):
    extra = """sampling.kind = poisson
sampling.mean = 4
dp.enabled = true
dp.noise_multiplier = 0.8
dp.clip_norm = 0.2
experiment.master_seed = 77
"""
    logs = []
    for name in ("a", "b"):
        run_experiment(config(data_csv, tmp_path / name, extra))
        logs.append((tmp_path / name / "rep_0" / "round_log.csv").read_bytes())
    assert logs[0] == logs[1]
    report = (tmp_path / "a" / "rep_0" / "accountant.txt").read_text()
    assert "epsilon = " in report and "delta = " in report and "order\trdp\tepsilon" in report
    # different master seed -> different noise
    run_experiment(config(data_csv, tmp_path / "c", extra.replace("77", "78")))
    assert (tmp_path / "c" / "rep_0" / "round_log.csv").read_bytes() != logs[0]


def test_adaptive_dp_report_carries_note(data_csv, tmp_path):
    extra = "dp.enabled = true\ndp.clip_mode = adaptive\nsampling.kind = poisson\nsampling.mean = 4\n"
    res = run_experiment(config(data_csv, tmp_path / "a", extra))
    assert res.privacy[0]["note"] == "epsilon excludes clip-adaptation cost"
    clips = [float(r["clip_norm"]) for r in read_round_log(tmp_path / "a" / "rep_0" / "round_log.csv")]
    assert clips[0] == 0.1 and len(set(clips)) > 1


def test_centralized_baseline(data_csv, tmp_path):
    res = run_experiment(config(data_csv, tmp_path / "c", "experiment.centralized_baseline = true\n"))
    kinds = {r.kind for r in res.summary}
    assert kinds == {"federated", "centralized"}
    base = res.baselines[0]
    assert base.rounds[0].participant_ids == [0]
    assert res.row("auc", "centralized").values[0] > 0.9
    assert (tmp_path / "c" / "rep_0" / "centralized_round_log.csv").exists()


def test_errors_carry_repetition_context(data_csv, tmp_path):
    cfg = with_overrides(config(data_csv, tmp_path / "e"), ["partition.n_clients=100000"])
    with pytest.raises(ExperimentError, match="repetition 0"):
        run_experiment(cfg)
