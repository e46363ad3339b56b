import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedharm.config import KEYS, REQUIRED, ConfigError, from_mapping, parse_config, parse_text, serialize, with_overrides
from fedharm.experiment import accountant_report


def test_minimal_config_defaults(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\n\ndataset.path = data.csv\n")
    cfg = parse_config(p)
    for key, spec in KEYS.items():
        if spec.default is not REQUIRED:
            assert cfg[key] == spec.default
    ps, ms, tc = cfg.partition_spec(), cfg.model_spec(), cfg.train_config()
    assert (ps.client_size, ps.client_harmful_ratio, ps.test_fraction, ps.test_harmful_ratio) == (100, 0.5, 0.1, 0.08)
    assert (ms.kind, ms.hash_dimension) == ("logistic_regression", 32768)
    assert (tc.epochs, tc.batch_size, tc.learning_rate) == (7, 10, 0.001)
    assert cfg.dp_config(50) is None


def test_missing_file_and_required_key(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "none.txt")
    with pytest.raises(ConfigError, match="dataset.path"):
        parse_text("model.kind = logistic_regression\n")


@pytest.mark.parametrize("line,match", [
    ("partition.client_harmful_ratio = 1.5", r"partition.client_harmful_ratio.*\(0, 1\]"),
    ("partition.clent_size = 10", "unknown key 'partition.clent_size'"),
    ("model.hash_dimension = 1000", "model.hash_dimension.*power of two"),
    ("train.epochs = seven", "train.epochs: cannot parse"),
    ("sampling.kind = random", "sampling.kind"),
    ("dp.delta = 1.5", "dp.delta"),
    ("experiment.repetitions = 0", "experiment.repetitions"),
    ("no equals sign", "expected 'key = value'"),
])
def test_errors_name_the_key(line, match):
    with pytest.raises(ConfigError, match=match):
        parse_text(f"dataset.path = x.csv\n{line}\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("dataset.path = a\ndataset.path = b\n")


def test_label_lists_override_preset():
    cfg = parse_text("dataset.path = x\ndataset.harmful_labels = Abusive, Hate\ndataset.normal_labels = Normal\n"
                     "dataset.dropped_labels = Spam\n")
    s = cfg.label_schema()
    assert s.harmful_labels == {"Abusive", "Hate"} and s.dropped_labels == {"Spam"}
    with pytest.raises(ConfigError, match="dataset.normal_labels"):
        parse_text("dataset.path = x\ndataset.harmful_labels = a\n")


def test_628_client_dp_config_reports_about_three():
    cfg = parse_text("""dataset.path = abusive.csv
partition.n_clients = 628
experiment.rounds = 100
sampling.kind = poisson
sampling.mean = 25
dp.enabled = true
dp.noise_multiplier = 0.875
dp.delta = 1e-3
""")
    pop = list(range(628))
    dp = cfg.dp_config(628)
    assert dp.noise_multiplier == 0.875 and dp.delta == 1e-3
    rep = accountant_report(cfg.sampling_policy(pop), 628, dp.noise_multiplier, 100, dp.delta)
    assert rep["epsilon"] == pytest.approx(3.0, rel=0.15)


def test_default_delta_is_inverse_population():
    cfg = parse_text("dataset.path = x\ndp.enabled = true\n")
    assert cfg.dp_config(200).delta == 1 / 200


def test_repetition_seeds_are_distinct_and_stable():
    cfg = parse_text("dataset.path = x\nexperiment.master_seed = 42\n")
    seeds = {cfg.repetition_seed(r, m) for r in range(5) for m in range(5)}
    assert len(seeds) == 25
    assert cfg.repetition_seed(3, 1) == parse_text("dataset.path = y\nexperiment.master_seed = 42\n").repetition_seed(3, 1)


def test_overrides():
    cfg = parse_text("dataset.path = x\n")
    new = with_overrides(cfg, ["train.epochs=3", "dp.enabled = yes"])
    assert new["train.epochs"] == 3 and new["dp.enabled"] is True
    with pytest.raises(ConfigError):
        with_overrides(cfg, ["train.epoch=3"])


def _value(key):
    spec = KEYS[key]
    if key == "dataset.path":
        return st.text(st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=12)
    if spec.check is not None:
        return st.just(spec.default)
    if spec.type is bool:
        return st.booleans()
    if spec.type is int:
        return st.integers(-(2**62), 2**62)
    if spec.type is float:
        return st.floats(allow_nan=False, allow_infinity=False)
    return st.text(st.characters(min_codepoint=33, max_codepoint=126), max_size=10)


@settings(max_examples=100, deadline=None)
@given(st.fixed_dictionaries({}, optional={k: _value(k) for k in KEYS if KEYS[k].check is None})
       .map(lambda d: {"dataset.path": "data.csv", **d}))
def test_round_trip(values):
    try:
        cfg = from_mapping(values)
    except ConfigError:
        return
    text = serialize(cfg)
    again = parse_text(text)
    assert again == cfg
    assert serialize(again) == text


@settings(max_examples=50, deadline=None)
@given(
    ratio=st.floats(0.01, 1.0), size=st.integers(2, 5000), lr=st.floats(0, 1), z=st.floats(0, 10),
    kind=st.sampled_from(["fixed_cohort", "uniform_without_replacement", "poisson"]),
)
def test_round_trip_constrained(ratio, size, lr, z, kind):
    text = (f"dataset.path = d.csv\npartition.client_harmful_ratio = {ratio!r}\npartition.client_size = {size}\n"
            f"train.learning_rate = {lr!r}\ndp.noise_multiplier = {z!r}\nsampling.kind = {kind}\n")
    try:
        cfg = parse_text(text)
    except ConfigError:
        return
    assert parse_text(serialize(cfg)) == cfg
