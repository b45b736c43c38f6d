from pathlib import Path

import pytest

from feddtre.corpus import CorpusConfig, generate_corpus

ROOT = Path(__file__).resolve().parents[1]
REFERENCE_SPEC = ROOT / "specs" / "reference.json"


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(CorpusConfig(vocab_size=10, n_sequences=120, n_eval=20, n_trust=30, seed=5))


@pytest.fixture(scope="session")
def reference_spec_path():
    return REFERENCE_SPEC


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.acceptance_lines
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
