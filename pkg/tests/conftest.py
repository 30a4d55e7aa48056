import json
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_archive():
    return (FIXTURES / "fixture_1mb.apk").read_bytes()


@pytest.fixture(scope="session")
def fixture_golden():
    return json.loads((FIXTURES / "fixture_1mb.golden.json").read_text())


@pytest.fixture(scope="session")
def synth32(tmp_path_factory):
    """100/class 32x32 synthetic corpus split 30% GanTrain / 50% Test."""
    from apkgan.corpus import synth_corpus

    root = tmp_path_factory.mktemp("synth32")
    return synth_corpus(100, 32, 0, root, gan_fraction=0.30, test_fraction=0.5)


TOY_STEPS = {"wgan-gp": 2000, "dcgan": 4000}


@pytest.fixture(scope="session")
def toy_runs():
    """Five seeded 1-D toy runs per variant, computed once: variant -> (runs, seconds)."""
    import time

    from apkgan.gan import run_toy, toy_config

    cache = {}

    def get(variant):
        if variant not in cache:
            t0 = time.perf_counter()
            runs = [run_toy(toy_config(variant, s), TOY_STEPS[variant]) for s in range(5)]
            cache[variant] = (runs, time.perf_counter() - t0)
        return cache[variant]

    return get


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion: prints a PASS/FAIL line, then asserts."""

    def record(number: int, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
