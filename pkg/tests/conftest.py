import pytest

from litenet.config import PipelineConfig
from litenet.pipeline import load_bars, run_pipeline

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_cfg():
    return (
        PipelineConfig()
        .set("data.n_bars", 1200)
        .set("train.epochs", 3)
        .set("train.prune_schedule", (1, 2))
        .set("run.seed", 3)
    )


@pytest.fixture(scope="session")
def small_run(small_cfg):
    return run_pipeline(small_cfg, load_bars(small_cfg))
