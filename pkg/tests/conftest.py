import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def align_signs(A, B):
    """Flip columns of ``B`` so that each has a nonnegative inner product with ``A``."""
    sgn = np.sign(np.sum(A * B, axis=0))
    sgn[sgn == 0] = 1.0
    return B * sgn


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
