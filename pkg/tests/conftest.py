import json
from pathlib import Path

import numpy as np
import pytest

from ofdm_wanm.signal_model import OFDMConfig, PriorBands

FIXTURES = Path(__file__).parent / "fixtures"

DEFAULT_BANDS = PriorBands(((0.15, 0.30, 1.0), (0.70, 0.85, 1.0)))


@pytest.fixture(scope="session")
def frozen():
    return json.loads((FIXTURES / "frozen_values.json").read_text())


@pytest.fixture
def default_config():
    return OFDMConfig(n_subcarriers=512, grid_size=64, pilot_count=36)


@pytest.fixture
def default_bands():
    return DEFAULT_BANDS


def atoms(freqs, gains, positions):
    """Noiseless samples sum_r g_r exp(-j 2 pi f_r n)."""
    n = np.asarray(positions, dtype=float)
    return np.exp(-2j * np.pi * np.outer(n, np.atleast_1d(freqs))) @ np.atleast_1d(np.asarray(gains, complex))


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Remember one acceptance verdict for the end-of-run summary."""
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
