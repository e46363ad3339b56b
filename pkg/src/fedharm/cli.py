"""Command-line interface: ``fedharm <subcommand> ...``.

Every subcommand returns 0 on success and a nonzero code on any
validation or runtime error (the message goes to stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import _accel
from .accountant import CONVERSIONS, DEFAULT_ORDERS, AccountingError, calibrate_noise
from .config import ConfigError, parse_config, reference, serialize, with_overrides
from .experiment import accountant_report, load_config_corpus, run_experiment, write_accountant_report
from .fedavg import SamplingPolicy, evaluate
from .features import featurize_examples
from .metrics import METRIC_NAMES
from .model import ModelError, load_checkpoint, load_checkpoint_spec
from .partition import max_clients, partition, split_test, write_manifest
from .synth import SynthSpec, write_synthetic_csv

log = logging.getLogger("fedharm")


def _load(args):
    cfg = parse_config(args.config)
    return with_overrides(cfg, args.set or [])


def _add_config(p):
    p.add_argument("--config", required=True, help="experiment config file (key = value)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")


def _sampling_q(args) -> float:
    if args.q is not None:
        return args.q
    if args.population is None or args.sampling_size is None:
        raise AccountingError("give --q, or both --population and --sampling-size")
    if args.population <= 0 or not 0 <= args.sampling_size <= args.population:
        raise AccountingError("need 0 <= sampling size <= population and population > 0")
    return args.sampling_size / args.population


def _add_sampling(p):
    p.add_argument("--q", type=float, help="per-step sampling probability")
    p.add_argument("--population", type=int, help="number of clients")
    p.add_argument("--sampling-size", type=float, help="expected cohort size (q = size / population)")
    p.add_argument("--steps", type=int, default=100, help="number of rounds (default 100)")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--conversion", choices=CONVERSIONS, default="improved")


# --------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_examples=args.n_examples, harmful_fraction=args.harmful_fraction, vocab_size=args.vocab_size,
        overlap=args.overlap, mean_length=args.mean_length, background_rate=args.background_rate,
        label_noise=args.label_noise, seed=args.seed,
    )
    n = write_synthetic_csv(spec, args.out)
    print(f"wrote {n} examples to {args.out}")
    return 0


def cmd_partition(args) -> int:
    cfg = _load(args)
    corpus = load_config_corpus(cfg)
    spec = cfg.partition_spec(args.rep)
    _, pool = split_test(corpus, spec)
    limit = max_clients(corpus, pool, spec)
    if args.max_clients:
        print(limit)
        return 0
    fd = partition(corpus, spec, cfg["partition.n_clients"] or None)
    out = Path(args.out)
    write_manifest(fd, out)
    print(f"clients = {len(fd.clients)}")
    print(f"max_clients = {limit}")
    print(f"test_examples = {len(fd.test_indices)}")
    print(f"manifest = {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    if args.output_dir:
        cfg = with_overrides(cfg, [f"experiment.output_dir={args.output_dir}"])
    result = run_experiment(cfg)
    print(f"{'kind':12s} {'metric':20s} {'mean':>10s} {'std':>10s}")
    for row in result.summary:
        print(f"{row.kind:12s} {row.metric:20s} {row.mean:10.4f} {row.std:10.4f}")
    if result.privacy:
        p = result.privacy[0]
        note = f" ({p['note']})" if "note" in p else ""
        print(f"privacy: epsilon = {p['epsilon']:.4f} at delta = {p['delta']:g}{note}")
    print(f"results in {result.output_dir}")
    return 0


def cmd_account(args) -> int:
    if args.config:
        cfg = _load(args)
        n = cfg["partition.n_clients"]
        if n == 0:
            corpus = load_config_corpus(cfg)
            spec = cfg.partition_spec(0)
            n = max_clients(corpus, split_test(corpus, spec)[1], spec)
        policy = cfg.sampling_policy(list(range(n)))
        report = accountant_report(
            policy, n, cfg["dp.noise_multiplier"], cfg["experiment.rounds"], cfg.delta(n),
            cfg["dp.conversion"], adaptive=cfg["dp.clip_mode"] == "adaptive",
        )
    else:
        if args.noise is None:
            raise AccountingError("--noise is required without --config")
        q = _sampling_q(args)
        policy = SamplingPolicy("poisson", mean=q)
        report = accountant_report(policy, 1, args.noise, args.steps, args.delta, args.conversion)
    if args.format == "kv":
        for key in ("sampling_probability", "noise_multiplier", "steps", "delta", "conversion",
                    "epsilon", "optimal_order", "note"):
            if key in report:
                print(f"{key}={report[key]}")
    elif args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        print(f"{'order':>8s} {'rdp':>14s} {'epsilon':>14s}")
        for a, r, e in zip(report["orders"], report["rdp"], report["per_order_epsilon"]):
            mark = "  <-" if a == report["optimal_order"] else ""
            print(f"{a:8g} {r:14.6g} {e:14.6g}{mark}")
        print(f"q = {report['sampling_probability']:.6g}, z = {report['noise_multiplier']:g}, T = {report['steps']}")
        print(f"epsilon = {report['epsilon']:.6g} at order {report['optimal_order']:g}, delta = {report['delta']:g}")
        if "note" in report:
            print(report["note"])
    if args.out:
        write_accountant_report(report, args.out)
    return 0


def cmd_calibrate(args) -> int:
    q = _sampling_q(args)
    z = calibrate_noise(args.epsilon, args.delta, q, args.steps, DEFAULT_ORDERS, z_max=args.z_max,
                        method=args.conversion)
    print(f"noise_multiplier={z:.6g}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    params = load_checkpoint(args.checkpoint)
    spec = load_checkpoint_spec(args.checkpoint) or cfg.model_spec(args.rep)
    if len(params) != spec.n_params:
        raise ModelError(f"checkpoint has {len(params)} values; model expects {spec.n_params}")
    corpus = load_config_corpus(cfg)
    if args.all:
        examples = corpus.examples
    else:
        test_idx, _ = split_test(corpus, cfg.partition_spec(args.rep))
        examples = [corpus.examples[i] for i in test_idx]
    x = featurize_examples(examples, spec.hash_dimension)
    report = evaluate(params, x, spec, cfg["experiment.threshold"])
    print(f"n_examples={len(examples)}")
    for m in METRIC_NAMES:
        print(f"{m}={getattr(report, m)!r}")
    return 0


def cmd_monitor(args) -> int:
    from .monitor import monitor_local_train

    cfg = _load(args)
    samples, code = monitor_local_train(serialize(cfg), args.client, args.interval, args.out, args.repeats)
    if code != 0:
        print(f"error: training process exited with code {code}", file=sys.stderr)
        return 1
    print(f"{len(samples)} samples written to {args.out}")
    for s in samples:
        print(f"{s.elapsed:8.2f}s  cpu {s.cpu_percent:6.1f}%  rss {s.rss_mb:8.1f} MB")
    return 0


def cmd_config_keys(args) -> int:
    print(reference())
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fedharm", description="Federated harmful-content classification simulator")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic labelled corpus (id,text,label)")
    p.add_argument("--out", required=True)
    p.add_argument("--n-examples", type=int, default=10_000)
    p.add_argument("--harmful-fraction", type=float, default=0.5)
    p.add_argument("--vocab-size", type=int, default=200)
    p.add_argument("--overlap", type=float, default=0.1)
    p.add_argument("--mean-length", type=float, default=12.0)
    p.add_argument("--background-rate", type=float, default=0.0)
    p.add_argument("--label-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="build clients and write the partition manifest")
    _add_config(p)
    p.add_argument("--out", default="partition.manifest")
    p.add_argument("--rep", type=int, default=0, help="repetition whose seed to use")
    p.add_argument("--max-clients", action="store_true", help="only print the maximum client count")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("train", help="run the configured experiment")
    _add_config(p)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("account", help="report (epsilon, delta) for a DP run")
    p.add_argument("--config", help="take q, z, T and delta from an experiment config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    _add_sampling(p)
    p.add_argument("--noise", type=float, help="noise multiplier z")
    p.add_argument("--format", choices=("table", "kv", "json"), default="table")
    p.add_argument("--out", help="also write the accountant report to this file")
    p.set_defaults(func=cmd_account)

    p = sub.add_parser("calibrate", help="smallest noise multiplier meeting a target epsilon")
    _add_sampling(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--z-max", type=float, default=100.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="evaluate a parameter checkpoint")
    _add_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--all", action="store_true", help="evaluate on the whole corpus instead of the test split")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("monitor", help="sample CPU/RSS of one client's local training")
    _add_config(p)
    p.add_argument("--client", type=int, default=0)
    p.add_argument("--interval", type=float, default=2.0)
    p.add_argument("--repeats", type=int, default=1, help="run local training this many times")
    p.add_argument("--out", default="resources.csv")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("config-keys", help="list every config key with its default")
    p.set_defaults(func=cmd_config_keys)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    log.debug("kernel backend: %s", _accel.backend_name())
    try:
        return args.func(args)
    except (ConfigError, AccountingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
