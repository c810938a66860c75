import numpy as np
import pytest

from duse.config import RunConfig
from duse.diagnostics import tiny_config

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg() -> RunConfig:
    return tiny_config()


@pytest.fixture
def small_run_cfg(tmp_path) -> RunConfig:
    """A few seconds of training on a shrunken synthetic set."""
    return RunConfig().replace(**{
        "train.clips_per_class": 6,
        "train.eval_clips_per_class": 3,
        "train.epochs": 2,
        "train.frames": 4,
        "train.batch": 8,
        "paths.out": str(tmp_path / "run"),
    })


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
