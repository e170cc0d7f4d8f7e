import numpy as np
import pytest

from jointrecon.errors import DomainError, ShapeMismatch
from jointrecon.grid import Grid
from jointrecon.metrics import MetricsReport, max_displacement_px, relative_difference, ssim


def ssim_oracle(a, b, win=11, sigma=1.5, k1=0.01, k2=0.03):
    """Windowed SSIM written out loop by loop from its definition."""
    x = np.arange(win) - (win - 1) / 2
    g1 = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g1, g1)
    w /= w.sum()
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    c1 = (k1 * (hi - lo)) ** 2
    c2 = (k2 * (hi - lo)) ** 2
    vals = []
    for i in range(a.shape[0] - win + 1):
        for j in range(a.shape[1] - win + 1):
            pa = a[i : i + win, j : j + win]
            pb = b[i : i + win, j : j + win]
            ma = (w * pa).sum()
            mb = (w * pb).sum()
            va = (w * (pa - ma) ** 2).sum()
            vb = (w * (pb - mb) ** 2).sum()
            cov = (w * (pa - ma) * (pb - mb)).sum()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_matches_oracle_on_random_pairs(rng):
    for _ in range(100):
        a = rng.uniform(0, 1, (16, 16))
        b = a + rng.uniform(0, 0.5) * rng.standard_normal((16, 16))
        assert abs(ssim(a, b) - ssim_oracle(a, b)) <= 1e-9


def test_ssim_agrees_with_scikit_image(rng):
    metrics = pytest.importorskip("skimage.metrics")
    a = rng.uniform(0, 1, (32, 32))
    b = np.clip(a + 0.1 * rng.standard_normal((32, 32)), 0, 1)
    ref = metrics.structural_similarity(
        a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
    )
    # scikit-image averages over a cropped full-size map and uses the given range
    drange = max(a.max(), b.max()) - min(a.min(), b.min())
    assert abs(ssim(a, b) - ref) < 0.02 and drange <= 1.0


def test_ssim_properties(rng):
    a = rng.uniform(0, 1, (20, 20))
    assert ssim(a, a) == pytest.approx(1.0)
    b = rng.uniform(0, 1, (20, 20))
    assert ssim(a, b) == pytest.approx(ssim(b, a))
    assert ssim(np.ones((12, 12)), np.ones((12, 12))) == 1.0
    z = a * np.exp(1j * rng.uniform(0, 6, a.shape))
    assert ssim(z, a) == pytest.approx(1.0)
    with pytest.raises(ShapeMismatch):
        ssim(a, a[:, :-1])
    with pytest.raises(ShapeMismatch):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_relative_difference_examples():
    gt = np.array([0.1, 0.0, -0.2, 0.0, 0.3, 0.4])
    assert relative_difference(gt, gt) == 0.0
    assert relative_difference(np.zeros(6), gt) == 100.0
    est = gt + np.array([0.05, -0.1, 0.0, 0.2, 0.0, 0.1])
    # power-of-two scalings are exact in floating point
    for c in (2.0, 0.25):
        assert relative_difference(c * est, c * gt) == relative_difference(est, gt)
    assert relative_difference([0.0, 0.0, 0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.0, 0.0, 2.0]) == 50.0
    with pytest.raises(DomainError):
        relative_difference(gt, np.zeros(6))
    with pytest.raises(ShapeMismatch):
        relative_difference(gt[:3], gt)


def test_max_displacement():
    g = Grid.standard(10)
    # a translation of 0.2 is one pixel of width 0.2
    assert max_displacement_px([0, 0, 0, 0, 0.2, 0], np.zeros(6), g) == pytest.approx(1.0)
    assert max_displacement_px(np.zeros(6), np.zeros(6), g) == 0.0


def test_report_row():
    assert MetricsReport(0.9).row() == {"ssim": 0.9, "rd_percent": "n/a", "max_displacement_px": "n/a"}
    assert MetricsReport(0.9, 1.5, 0.2).row()["rd_percent"] == 1.5


def test_ssim_luminance_offset_decreases(rng):
    a = rng.uniform(0, 1, (16, 16))
    scores = [ssim(a, a + c) for c in (0.5, 1.0, 2.0)]
    assert scores[0] < 1 and scores[0] > scores[1] > scores[2]


def test_doubled_parameters_are_100_percent_off():
    gt = np.array([0.1, -0.3, 0.2, 0.0, 0.05, 0.08])
    assert relative_difference(2 * gt, gt) == pytest.approx(100.0)
