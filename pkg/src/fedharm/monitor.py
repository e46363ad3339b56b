"""Resource monitor: CPU and resident memory of one process every ``interval`` seconds.

CPU percent uses one-core = 100 semantics (psutil's convention): a process
saturating two cores reads 200.  Ticks are scheduled at fixed offsets from
the start (interval, 2*interval, ...) so sleep jitter does not accumulate.
"""

from __future__ import annotations

import csv
import multiprocessing as mp
import time
from dataclasses import dataclass
from pathlib import Path

import psutil

_POLL = 0.05


@dataclass(frozen=True)
class ResourceSample:
    elapsed: float
    cpu_percent: float
    rss_mb: float


def _alive(proc: psutil.Process) -> bool:
    try:
        return proc.is_running() and proc.status() != psutil.STATUS_ZOMBIE
    except psutil.Error:
        return False


def monitor_resources(pid: int, interval: float = 2.0, sink: str | Path | None = None,
                      max_duration: float | None = None) -> list[ResourceSample]:
    """Sample ``pid`` until it exits (or ``max_duration`` elapses).

    A process that exits between ticks ends monitoring cleanly; the samples
    collected so far are returned (and written to ``sink`` as CSV).
    """
    if interval <= 0:
        raise ValueError("interval must be > 0")
    try:
        proc = psutil.Process(pid)
        proc.cpu_percent(None)  # prime; the first real reading covers one interval
    except psutil.NoSuchProcess:
        raise ValueError(f"process {pid} is not running") from None
    start = time.monotonic()
    samples: list[ResourceSample] = []
    tick = 1
    while _alive(proc):
        due = start + tick * interval
        while _alive(proc) and time.monotonic() < due:
            time.sleep(min(_POLL, max(0.0, due - time.monotonic())))
        if not _alive(proc):
            break
        try:
            with proc.oneshot():
                cpu = proc.cpu_percent(None)
                rss = proc.memory_info().rss / 2**20
        except psutil.Error:
            break
        samples.append(ResourceSample(time.monotonic() - start, cpu, rss))
        tick += 1
        if max_duration is not None and tick * interval > max_duration:
            break
    if sink is not None:
        write_samples(samples, sink)
    return samples


def write_samples(samples: list[ResourceSample], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("elapsed_s", "cpu_percent", "rss_mb"))
        for s in samples:
            w.writerow((f"{s.elapsed:.3f}", f"{s.cpu_percent:.1f}", f"{s.rss_mb:.2f}"))


def _local_train_worker(config_text: str, client_id: int, repeats: int) -> None:
    from .config import parse_text
    from .experiment import load_config_corpus
    from .model import init_params
    from .partition import partition
    from .training import local_train

    cfg = parse_text(config_text)
    corpus = load_config_corpus(cfg)
    fd = partition(corpus, cfg.partition_spec(0), cfg["partition.n_clients"] or None)
    spec = cfg.model_spec(0)
    params = init_params(spec)
    for _ in range(repeats):
        local_train(params, fd.client(client_id), cfg.train_config(0), spec)


def monitor_local_train(config_text: str, client_id: int = 0, interval: float = 2.0,
                        sink: str | Path | None = None, repeats: int = 1) -> tuple[list[ResourceSample], int]:
    """Run one client's local training in a child process and monitor it.

    Returns the samples and the child's exit code.
    """
    ctx = mp.get_context("spawn")
    child = ctx.Process(target=_local_train_worker, args=(config_text, client_id, repeats))
    child.start()
    try:
        samples = monitor_resources(child.pid, interval, sink)
    finally:
        child.join()
    return samples, child.exitcode
