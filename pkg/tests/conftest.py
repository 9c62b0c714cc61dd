import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from attnlut.model import ModelConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """A small model that runs in milliseconds but exercises every stage."""
    return ModelConfig(x=3, n=5, d=8, backbone_channels=(4, 8), input_size=16)


def lattice_image(rng, h, w, maxval=255):
    """Random image whose values sit exactly on the ``k / maxval`` lattice."""
    return rng.integers(0, maxval + 1, (h, w, 3)) / maxval


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
