import os
from pathlib import Path

import numpy as np
import pytest

os.environ.setdefault("POT_BACKEND_DISABLE_TENSORFLOW", "1")
os.environ.setdefault("POT_BACKEND_DISABLE_PYTORCH", "1")
os.environ.setdefault("POT_BACKEND_DISABLE_JAX", "1")
os.environ.setdefault("POT_BACKEND_DISABLE_CUPY", "1")

REPO = Path(__file__).resolve().parents[1]
DEMO = REPO / "demo"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_tone():
    """40x40 frame, dark left half and bright red right half."""
    f = np.zeros((40, 40, 3))
    f[:, :20] = [30, 30, 30]
    f[:, 20:] = [220, 20, 20]
    return f


def quadrant_frame(h=40, w=40):
    f = np.zeros((h, w, 3))
    f[: h // 2, : w // 2] = [255, 0, 0]
    f[: h // 2, w // 2 :] = [0, 255, 0]
    f[h // 2 :, : w // 2] = [0, 0, 255]
    f[h // 2 :, w // 2 :] = [255, 255, 0]
    return f


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
