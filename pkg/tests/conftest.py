import numpy as np
import pytest

from loopsig.detector import (
    DARK_COUNT_PROBABILITY,
    CALIBRATED_EFFICIENCIES,
    DetectorConfig,
    config_from_bin_efficiencies,
    with_catch_all,
)


@pytest.fixture(scope="session")
def calibrated_config() -> DetectorConfig:
    """9-bin calibrated loop detector, catch-all augmented."""
    return with_catch_all(config_from_bin_efficiencies(CALIBRATED_EFFICIENCIES[:9], DARK_COUNT_PROBABILITY))


@pytest.fixture(scope="session")
def calibrated_plain() -> DetectorConfig:
    return config_from_bin_efficiencies(CALIBRATED_EFFICIENCIES[:9], DARK_COUNT_PROBABILITY)


@pytest.fixture
def toy3() -> DetectorConfig:
    """Three well-separated high-efficiency bins; identifiable for K <= 7."""
    return DetectorConfig(p_c=(0.4, 0.3, 0.2), p_loss=(0.2, 0.3, 0.1), p_dc=0.01)


def random_config(rng: np.random.Generator, N: int, catch_all: bool = False) -> DetectorConfig:
    p_c = rng.dirichlet(np.ones(N + 1))[:N] * rng.uniform(0.3, 1.0)
    p_loss = rng.uniform(0, 1, N)
    config = DetectorConfig(tuple(p_c), tuple(p_loss), p_dc=float(rng.uniform(0, 0.2)))
    return with_catch_all(config) if catch_all else config


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict that is echoed in the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
