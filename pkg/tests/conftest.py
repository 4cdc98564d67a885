import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "refflow", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("refflow")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    # keep CLI runs that rely on the default output root inside the test sandbox
    monkeypatch.setenv("REFFLOW_OUTPUT_ROOT", str(tmp_path / "runs"))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
