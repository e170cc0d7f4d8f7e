"""Image container and forward-difference calculus.

Images are numpy arrays of shape ``grid.shape``: float64 for real images,
complex128 for complex ones (the complex plane is treated as R^2). A vector
field is an array of shape ``(channels * d, *shape)``; for complex images the
real-part gradient comes first, then the imaginary-part gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class Grid:
    """Regular pixel grid; pixel ``k`` along an axis sits at ``origin + (k + 0.5) * spacing``."""

    shape: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if not (len(self.shape) == len(self.origin) == len(self.spacing)):
            raise ShapeMismatch("shape, origin and spacing must have equal length")
        if any(n < 1 for n in self.shape):
            raise ShapeMismatch(f"grid shape must be positive, got {self.shape}")
        if any(not s > 0 for s in self.spacing):
            raise ShapeMismatch(f"grid spacing must be positive, got {self.spacing}")

    @classmethod
    def standard(cls, shape) -> Grid:
        """Grid covering the image domain [-1, 1]^d."""
        if np.isscalar(shape):
            shape = (int(shape), int(shape))
        shape = tuple(int(n) for n in shape)
        return cls(shape, (-1.0,) * len(shape), tuple(2.0 / n for n in shape))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing[axis]

    def coordinates(self) -> np.ndarray:
        """Pixel-center coordinates, shape ``(d, *shape)``."""
        axes = [self.axis_centers(k) for k in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))


@dataclass(frozen=True)
class ImageGrid:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.asarray(self.values)
        if not np.iscomplexobj(values):
            values = values.astype(np.float64, copy=False)
        else:
            values = values.astype(np.complex128, copy=False)
        if values.shape != self.grid.shape:
            raise ShapeMismatch(f"values shape {values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def standard(cls, values) -> ImageGrid:
        values = np.asarray(values)
        return cls(values, Grid.standard(values.shape))

    @property
    def shape(self):
        return self.grid.shape

    @property
    def origin(self):
        return self.grid.origin

    @property
    def spacing(self):
        return self.grid.spacing

    @property
    def channels(self) -> int:
        return 2 if np.iscomplexobj(self.values) else 1

    def with_values(self, values) -> ImageGrid:
        return ImageGrid(values, self.grid)


def values_of(u) -> np.ndarray:
    return u.values if isinstance(u, ImageGrid) else np.asarray(u)


def as_channels(u: np.ndarray) -> np.ndarray:
    """Real view with a leading channel axis: ``(1, *shape)`` or ``(2, *shape)``."""
    if np.iscomplexobj(u):
        return np.stack([u.real, u.imag])
    return u[np.newaxis]


def from_channels(c: np.ndarray) -> np.ndarray:
    if c.shape[0] == 2:
        return c[0] + 1j * c[1]
    return c[0]


def inner(a, b) -> float:
    """Real inner product; complex arrays are treated as pairs of reals."""
    return float(np.real(np.vdot(np.asarray(a).ravel(), np.asarray(b).ravel())))


def _forward_diff(u: np.ndarray, axis: int) -> np.ndarray:
    out = np.zeros_like(u)
    hi = [slice(None)] * u.ndim
    lo = [slice(None)] * u.ndim
    hi[axis] = slice(1, None)
    lo[axis] = slice(None, -1)
    out[tuple(lo)] = u[tuple(hi)] - u[tuple(lo)]
    return out


def _forward_diff_adjoint(w: np.ndarray, axis: int) -> np.ndarray:
    # transpose of _forward_diff: out[k] = w[k-1] - w[k], with w[-1] := 0 and w[n-1] ignored
    n = w.shape[axis]
    out = np.zeros_like(w)
    idx = [slice(None)] * w.ndim

    def at(s):
        idx[axis] = s
        return tuple(idx)

    out[at(slice(0, n - 1))] -= w[at(slice(0, n - 1))]
    out[at(slice(1, n))] += w[at(slice(0, n - 1))]
    return out


def gradient(u) -> np.ndarray:
    """Forward differences with a zero last slice along each axis.

    Differences are raw (not divided by the spacing). A complex image yields
    ``2 * d`` components per pixel.
    """
    arr = values_of(u)
    chans = as_channels(arr)
    comps = [_forward_diff(c, axis) for c in chans for axis in range(arr.ndim)]
    return np.stack(comps)


def divergence(w, ndim: int | None = None) -> np.ndarray:
    """Negative adjoint of :func:`gradient`.

    ``ndim`` is the image dimension; it defaults to ``w.ndim - 1``. A field with
    ``2 * ndim`` components maps back to a complex image.
    """
    w = np.asarray(w)
    d = w.ndim - 1 if ndim is None else ndim
    if w.shape[0] % d:
        raise ShapeMismatch(f"{w.shape[0]} components is not a multiple of d={d}")
    chans = w.shape[0] // d
    out = np.zeros((chans,) + w.shape[1:])
    for c in range(chans):
        for axis in range(d):
            out[c] -= _forward_diff_adjoint(w[c * d + axis], axis)
    return from_channels(out)
