import numpy as np
import pytest

from fedharm.ingest import Corpus, ExampleRecord
from fedharm.synth import SynthSpec, synthetic_corpus


def make_corpus(n_harmful, n_normal, tokens=("tok",)):
    """Corpus with the given class counts; ids h<i> / n<i>."""
    ex = [ExampleRecord(f"h{i}", tuple(tokens), 1) for i in range(n_harmful)]
    ex += [ExampleRecord(f"n{i}", tuple(tokens), 0) for i in range(n_normal)]
    return Corpus(ex)


@pytest.fixture(scope="session")
def synth_small():
    return synthetic_corpus(SynthSpec(n_examples=6000, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
