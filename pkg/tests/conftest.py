import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(np.ravel(a)), np.linalg.norm(np.ravel(b)), 1e-300)
    return float(np.linalg.norm(np.ravel(a - b)) / scale)


def smooth_image(n, rng, complex_=False):
    """Sum of a few random Gaussian bumps on the standard grid."""
    x = -1 + (np.arange(n) + 0.5) * 2 / n
    x0, x1 = np.meshgrid(x, x, indexing="ij")
    out = np.zeros((n, n), dtype=np.complex128 if complex_ else np.float64)
    for _ in range(3):
        c = rng.uniform(-0.5, 0.5, 2)
        w = rng.uniform(0.2, 0.5)
        amp = rng.uniform(0.5, 1.5) * (np.exp(1j * rng.uniform(0, 6.3)) if complex_ else 1.0)
        out = out + amp * np.exp(-((x0 - c[0]) ** 2 + (x1 - c[1]) ** 2) / (2 * w * w))
    return out


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
