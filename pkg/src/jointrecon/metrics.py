"""Image similarity (SSIM) and motion-parameter error (relative difference)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DomainError, ShapeMismatch
from .grid import values_of


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


def _valid_filter(img, w):
    out = img
    for axis in range(img.ndim):
        out = correlate1d(out, w, axis=axis, mode="constant")
    r = (len(w) - 1) // 2
    return out[tuple(slice(r, n - r) for n in img.shape)]


def ssim(a, b, win_size: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all window positions fully inside the image.

    Complex images are compared by magnitude. The dynamic range is the span of
    both images together.
    """
    a = np.abs(values_of(a)) if np.iscomplexobj(values_of(a)) else np.asarray(values_of(a), dtype=np.float64)
    b = np.abs(values_of(b)) if np.iscomplexobj(values_of(b)) else np.asarray(values_of(b), dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < win_size:
        raise ShapeMismatch(f"image {a.shape} smaller than the {win_size} window")
    drange = max(a.max(), b.max()) - min(a.min(), b.min())
    if drange == 0:
        return 1.0
    c1 = (k1 * drange) ** 2
    c2 = (k2 * drange) ** 2
    w = gaussian_window(win_size, sigma)
    mu_a = _valid_filter(a, w)
    mu_b = _valid_filter(b, w)
    saa = _valid_filter(a * a, w) - mu_a * mu_a
    sbb = _valid_filter(b * b, w) - mu_b * mu_b
    sab = _valid_filter(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def relative_difference(phi, phi_gt) -> float:
    """``100 * ||phi - phi_gt|| / ||phi_gt||`` on deviation-from-identity parameters."""
    phi = np.asarray(phi, dtype=np.float64)
    phi_gt = np.asarray(phi_gt, dtype=np.float64)
    if phi.shape != phi_gt.shape:
        raise ShapeMismatch("parameter vectors differ in length")
    ref = np.linalg.norm(phi_gt)
    if ref == 0:
        raise DomainError("relative difference undefined for a zero ground truth")
    return float(100.0 * np.linalg.norm(phi - phi_gt) / ref)


@dataclass
class MetricsReport:
    ssim: float
    rd_percent: float | None = None
    max_displacement_px: float | None = None
    stages: list | None = None

    def row(self) -> dict:
        return {
            "ssim": self.ssim,
            "rd_percent": "n/a" if self.rd_percent is None else self.rd_percent,
            "max_displacement_px": "n/a" if self.max_displacement_px is None else self.max_displacement_px,
        }


def max_displacement_px(phi, phi_ref, grid) -> float:
    """Largest distance, in pixels of ``grid``, between two affine deformations."""
    from .warp import affine_field

    d = affine_field(phi, grid).values - affine_field(phi_ref, grid).values
    d = d / np.asarray(grid.spacing)[:, None, None]
    return float(np.sqrt((d**2).sum(axis=0)).max())
