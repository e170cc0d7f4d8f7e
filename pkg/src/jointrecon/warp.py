"""Biquadratic spline interpolation u o phi, its phi-derivative and exact u-adjoint.

The spline of an image is stored by its B-spline coefficients. Coefficients
are obtained by inverting the interpolation condition
``u[k] = (c[k-1] + 6 c[k] + c[k+1]) / 8`` along each axis with mirror
boundary (``c[-1] = c[1]``, ``c[n] = c[n-2]``). Evaluation points are clamped
to the span of the pixel centers; mirror symmetry makes the spline's normal
derivative vanish there, so the clamped extension stays C^1.

Deformations are arrays of shape ``(2, *out_shape)`` holding physical
positions; parametric families map parameter vectors to such arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ShapeMismatch, ShapeTooSmall
from .grid import Grid, ImageGrid


@lru_cache(maxsize=64)
def _prefilter_inverse(n: int) -> np.ndarray:
    b = np.zeros((n, n))
    idx = np.arange(n)
    b[idx, idx] = 6.0
    b[idx[:-1], idx[:-1] + 1] = 1.0
    b[idx[1:], idx[1:] - 1] = 1.0
    b[0, 1] = 2.0
    b[n - 1, n - 2] = 2.0
    inv = np.linalg.inv(b / 8.0)
    inv.setflags(write=False)
    return inv


def _check_size(shape):
    if len(shape) != 2:
        raise ShapeMismatch(f"spline warping supports 2-D images only, got shape {shape}")
    if min(shape) < 3:
        raise ShapeTooSmall(f"spline needs at least 3 pixels per axis, got {shape}")


def spline_coefficients(u: np.ndarray) -> np.ndarray:
    _check_size(u.shape)
    b0 = _prefilter_inverse(u.shape[0])
    b1 = _prefilter_inverse(u.shape[1])
    if np.iscomplexobj(u):
        return (b0 @ u.real @ b1.T) + 1j * (b0 @ u.imag @ b1.T)
    return b0 @ u @ b1.T


def spline_coefficients_adjoint(c: np.ndarray) -> np.ndarray:
    b0 = _prefilter_inverse(c.shape[0])
    b1 = _prefilter_inverse(c.shape[1])
    if np.iscomplexobj(c):
        return (b0.T @ c.real @ b1) + 1j * (b0.T @ c.imag @ b1)
    return b0.T @ c @ b1


@dataclass(frozen=True)
class SplineRep:
    coef: np.ndarray
    grid: Grid
    order: int = 2

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at physical ``points`` of shape ``(2, ...)``."""
        return Sampler(self.grid, points).evaluate(self.coef)


def build_spline(u: ImageGrid) -> SplineRep:
    return SplineRep(spline_coefficients(u.values), u.grid)


def _axis_weights(t: np.ndarray, n: int):
    """Indices (mirror-folded), weights and t-derivatives of the 3 active B-splines."""
    t = np.clip(t, 0.0, n - 1.0)
    k = np.floor(t + 0.5)
    delta = t - k
    k = k.astype(np.intp)
    idx = np.stack([k - 1, k, k + 1])
    idx = np.where(idx < 0, -idx, idx)
    idx = np.where(idx > n - 1, 2 * (n - 1) - idx, idx)
    a = 0.5 - delta
    b = 0.5 + delta
    w = np.stack([0.5 * a * a, 0.75 - delta * delta, 0.5 * b * b])
    dw = np.stack([-a, -2.0 * delta, b])
    return idx, w, dw


class Sampler:
    """Interpolation weights of a fixed set of physical points on a source grid.

    Building a sampler costs one pass over the points; evaluation, derivative
    and adjoint scatter then reuse it for any coefficient array.
    """

    def __init__(self, source: Grid, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        _check_size(source.shape)
        if points.shape[0] != 2:
            raise ShapeMismatch(f"points must have leading dimension 2, got {points.shape}")
        self.source = source
        self.out_shape = points.shape[1:]
        n0, n1 = source.shape
        t0 = (points[0].ravel() - source.origin[0]) / source.spacing[0] - 0.5
        t1 = (points[1].ravel() - source.origin[1]) / source.spacing[1] - 0.5
        i0, self.w0, self.dw0 = _axis_weights(t0, n0)
        i1, self.w1, self.dw1 = _axis_weights(t1, n1)
        # flat source index for each of the 3x3 taps: (3, 3, N)
        self.flat = i0[:, None, :] * n1 + i1[None, :, :]

    def _combine(self, coef, wa, wb):
        c = coef.ravel()
        acc = np.zeros(self.flat.shape[-1], dtype=c.dtype)
        for a in range(3):
            row = np.zeros_like(acc)
            for b in range(3):
                row += c[self.flat[a, b]] * wb[b]
            acc += row * wa[a]
        return acc.reshape(self.out_shape)

    def evaluate(self, coef: np.ndarray) -> np.ndarray:
        return self._combine(coef, self.w0, self.w1)

    def evaluate_gradient(self, coef: np.ndarray) -> np.ndarray:
        """Physical-coordinate spatial gradient of the spline, shape ``(2, *out_shape)``."""
        g0 = self._combine(coef, self.dw0, self.w1) / self.source.spacing[0]
        g1 = self._combine(coef, self.w0, self.dw1) / self.source.spacing[1]
        return np.stack([g0, g1])

    def scatter(self, y: np.ndarray) -> np.ndarray:
        """Transpose of :meth:`evaluate`: map output-grid values to coefficient space."""
        y = np.asarray(y).ravel()
        size = self.source.size
        if np.iscomplexobj(y):
            return self._scatter_real(y.real, size) + 1j * self._scatter_real(y.imag, size)
        return self._scatter_real(y, size)

    def _scatter_real(self, y, size):
        out = np.zeros(size)
        for a in range(3):
            ya = y * self.w0[a]
            for b in range(3):
                out += np.bincount(self.flat[a, b], weights=ya * self.w1[b], minlength=size)
        return out.reshape(self.source.shape)


def _points(phi) -> np.ndarray:
    return phi.values if isinstance(phi, DeformationField) else np.asarray(phi)


@dataclass(frozen=True)
class DeformationField:
    """Physical positions phi(x_i) sampled at the pixel centers of ``grid``."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.ndim,) + self.grid.shape:
            raise ShapeMismatch(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("deformation field must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def identity(cls, grid: Grid) -> DeformationField:
        return cls(grid.coordinates(), grid)

    def displacement(self) -> np.ndarray:
        return self.values - self.grid.coordinates()

    def max_displacement_px(self) -> float:
        disp = self.displacement()
        scaled = disp / np.asarray(self.grid.spacing)[:, None, None]
        return float(np.sqrt((scaled**2).sum(axis=0)).max())


def warp(u: ImageGrid, phi: DeformationField) -> ImageGrid:
    """Spline value of ``u`` at every position of ``phi``, on phi's grid."""
    out = Sampler(u.grid, _points(phi)).evaluate(spline_coefficients(u.values))
    return ImageGrid(out, phi.grid)


def warp_dphi(u: ImageGrid, phi: DeformationField) -> np.ndarray:
    """Per-pixel derivative of ``J(u; phi)`` with respect to ``phi_i``, shape ``(2, *shape)``."""
    return Sampler(u.grid, _points(phi)).evaluate_gradient(spline_coefficients(u.values))


def warp_adjoint_u(phi: DeformationField, y, source: Grid) -> ImageGrid:
    """Exact transpose of ``u -> warp(u, phi)``."""
    y = y.values if isinstance(y, ImageGrid) else np.asarray(y)
    points = _points(phi)
    if y.shape != points.shape[1:]:
        raise ShapeMismatch(f"y shape {y.shape} != field shape {points.shape[1:]}")
    coef = Sampler(source, points).scatter(y)
    return ImageGrid(spline_coefficients_adjoint(coef), source)


# --- parametric deformations -------------------------------------------------


def affine_matrix(params) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(params, dtype=np.float64)
    m = np.array([[1.0 + p[0], p[1]], [p[2], 1.0 + p[3]]])
    return m, p[4:6].copy()


def affine_params(matrix, offset) -> np.ndarray:
    """Deviation-from-identity parameters of ``x -> matrix @ x + offset``."""
    m = np.asarray(matrix, dtype=np.float64)
    return np.array([m[0, 0] - 1.0, m[0, 1], m[1, 0], m[1, 1] - 1.0, offset[0], offset[1]])


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def affine_field(params, grid: Grid) -> DeformationField:
    m, b = affine_matrix(params)
    x = grid.coordinates()
    values = np.einsum("ij,j...->i...", m, x) + b[:, None, None]
    return DeformationField(values, grid)


def affine_param_adjoint(g: np.ndarray, grid: Grid) -> np.ndarray:
    """Transpose of the linear part ``params -> affine_field(params) - id``."""
    g = np.asarray(g)
    x = grid.coordinates()
    return np.array(
        [
            np.sum(g[0] * x[0]),
            np.sum(g[0] * x[1]),
            np.sum(g[1] * x[0]),
            np.sum(g[1] * x[1]),
            np.sum(g[0]),
            np.sum(g[1]),
        ]
    )


def invert_affine(params) -> np.ndarray:
    m, b = affine_matrix(params)
    minv = np.linalg.inv(m)
    return affine_params(minv, -minv @ b)


def rigid_field(params, grid: Grid) -> DeformationField:
    """``params = (theta, b1, b2)``; field ``x -> R_theta x + b``."""
    theta, b = float(params[0]), np.asarray(params[1:3], dtype=np.float64)
    x = grid.coordinates()
    values = np.einsum("ij,j...->i...", rotation(theta), x) + b[:, None, None]
    return DeformationField(values, grid)


def rigid_param_jacobian_adjoint(params, g: np.ndarray, grid: Grid) -> np.ndarray:
    theta = float(params[0])
    c, s = np.cos(theta), np.sin(theta)
    dr = np.array([[-s, -c], [c, -s]])
    x = grid.coordinates()
    drx = np.einsum("ij,j...->i...", dr, x)
    return np.array([np.sum(g * drx), np.sum(g[0]), np.sum(g[1])])


def canonical_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    t = float(np.mod(theta + np.pi, 2 * np.pi) - np.pi)
    return np.pi if t == -np.pi else t


class AffineParametrization:
    """Six-parameter affine family, zero parameters giving the identity."""

    name = "affine"
    size = 6

    def zero(self) -> np.ndarray:
        return np.zeros(6)

    def points(self, params, grid: Grid) -> np.ndarray:
        return affine_field(params, grid).values

    def jacobian_adjoint(self, params, g, grid: Grid) -> np.ndarray:
        return affine_param_adjoint(g, grid)

    def to_affine(self, params) -> np.ndarray:
        return np.asarray(params, dtype=np.float64).copy()


class RigidParametrization:
    """Rotation angle plus translation, ``(theta, b1, b2)``."""

    name = "rigid"
    size = 3

    def zero(self) -> np.ndarray:
        return np.zeros(3)

    def points(self, params, grid: Grid) -> np.ndarray:
        return rigid_field(params, grid).values

    def jacobian_adjoint(self, params, g, grid: Grid) -> np.ndarray:
        return rigid_param_jacobian_adjoint(params, g, grid)

    def to_affine(self, params) -> np.ndarray:
        return affine_params(rotation(float(params[0])), params[1:3])


PARAMETRIZATIONS = {"affine": AffineParametrization, "rigid": RigidParametrization}
