import json
from pathlib import Path

import numpy as np
import pytest

from fastgrpo.config import load_run_config
from fastgrpo.experiments import run_pretrain

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"

# filled by tests/test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def shipped_config(command: str, name: str, **changes):
    cfg = load_run_config(command, CONFIGS / name)
    for k, v in changes.items():
        setattr(cfg, k, v)
    return cfg


@pytest.fixture(scope="session")
def pretrain_bundle(tmp_path_factory):
    """The shipped 20k-step pretraining run; other slow tests start from it."""
    out = tmp_path_factory.mktemp("pretrain")
    summary = run_pretrain(shipped_config("pretrain", "pretrain.json"), out)
    return out, summary


@pytest.fixture(scope="session")
def pretrained_path(pretrain_bundle):
    return pretrain_bundle[0] / "checkpoint.json"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def read_json(path):
    return json.loads(Path(path).read_text())
