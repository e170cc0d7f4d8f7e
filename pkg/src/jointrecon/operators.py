"""Linear forward models with exact adjoints.

Every operator maps a numpy image on its ``grid`` to a data array and back.
``coarsen`` re-discretizes the same physical model on a coarser image grid,
returning the new operator and the subset of data entries it predicts
(``None`` when it predicts all of them).
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import FieldMismatch, ParamError, ShapeMismatch
from .grid import Grid, values_of


class LinearOperator:
    kind: str = ""

    def __init__(self, grid: Grid, scale: float = 1.0):
        self.grid = grid
        self.scale = float(scale)

    @property
    def domain_shape(self):
        return self.grid.shape

    range_shape: tuple = ()
    complex_domain = False
    requires_complex = False

    def _check_domain(self, u):
        u = values_of(u)
        if u.shape != self.domain_shape:
            raise ShapeMismatch(f"{self.kind}: input shape {u.shape} != {self.domain_shape}")
        if np.iscomplexobj(u) and not self.complex_domain and np.any(np.imag(u)):
            raise FieldMismatch(f"{self.kind} requires a real image")
        if self.requires_complex and not np.iscomplexobj(u):
            raise FieldMismatch(f"{self.kind} requires a complex image")
        return u

    def _check_range(self, y):
        y = np.asarray(y)
        if y.shape != self.range_shape:
            raise ShapeMismatch(f"{self.kind}: data shape {y.shape} != {self.range_shape}")
        return y

    def apply(self, u) -> np.ndarray:
        return self.scale * self._apply(self._check_domain(u))

    def adjoint(self, y) -> np.ndarray:
        return self.scale * self._adjoint(self._check_range(y))

    def with_scale(self, scale: float) -> LinearOperator:
        raise NotImplementedError

    def coarsen(self, grid: Grid):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


class Identity(LinearOperator):
    kind = "identity"
    complex_domain = True

    @property
    def range_shape(self):
        return self.grid.shape

    def _apply(self, u):
        return u.copy()

    def _adjoint(self, y):
        return y.copy()

    def with_scale(self, scale):
        return Identity(self.grid, scale)

    def coarsen(self, grid):
        if grid.shape == self.grid.shape:
            return self, None
        return Resample(grid, self.grid.shape, self.scale), None

    def to_config(self):
        return {"kind": "identity", "shape": list(self.grid.shape), "scale": self.scale}


def _overlap_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Area-weighted averaging of ``n_in`` cells onto ``n_out`` cells over [0, 1]."""
    a = np.linspace(0.0, 1.0, n_out + 1)
    b = np.linspace(0.0, 1.0, n_in + 1)
    lo = np.maximum(a[:-1, None], b[None, :-1])
    hi = np.minimum(a[1:, None], b[None, 1:])
    overlap = np.clip(hi - lo, 0.0, None)
    return overlap * n_out


class Resample(LinearOperator):
    """Area-weighted averaging onto a data grid of ``out_shape`` cells.

    For an integer factor this is the block average; when the data grid is
    finer than the image each data cell takes the value of the pixel covering it.
    """

    kind = "downsample"

    def __init__(self, grid: Grid, out_shape, scale: float = 1.0):
        super().__init__(grid, scale)
        self.out_shape = tuple(int(n) for n in out_shape)
        self.r0 = _overlap_matrix(self.out_shape[0], grid.shape[0])
        self.r1 = _overlap_matrix(self.out_shape[1], grid.shape[1])

    @classmethod
    def by_factor(cls, grid: Grid, factor: int, scale: float = 1.0):
        if factor < 1 or any(n % factor for n in grid.shape):
            raise ParamError(f"factor {factor} must divide the image shape {grid.shape}")
        return cls(grid, tuple(n // factor for n in grid.shape), scale)

    @property
    def range_shape(self):
        return self.out_shape

    def _apply(self, u):
        return self.r0 @ u @ self.r1.T

    def _adjoint(self, y):
        return self.r0.T @ y @ self.r1

    def with_scale(self, scale):
        return Resample(self.grid, self.out_shape, scale)

    def coarsen(self, grid):
        return Resample(grid, self.out_shape, self.scale), None

    def to_config(self):
        return {
            "kind": "downsample",
            "shape": list(self.grid.shape),
            "out_shape": list(self.out_shape),
            "scale": self.scale,
        }


# --- Fourier sampling --------------------------------------------------------


def radial_mask(n: int, spokes: int = 15, lowpass: int = 10) -> np.ndarray:
    """Centered integer frequencies ``(m, 2)`` of radial spokes plus a low-pass square.

    Spokes are rays leaving the DC coefficient at angles ``2 pi k / spokes``,
    rasterized at unit radial steps up to the edge of the frequency grid.
    Frequencies lie in ``[-n/2, n/2)``; rows are unique and sorted.
    """
    half = n // 2
    pts = []
    radii = np.arange(0.0, half * np.sqrt(2.0) + 1.0, 0.5)
    for k in range(spokes):
        ang = 2.0 * np.pi * k / spokes
        kx = np.rint(radii * np.cos(ang)).astype(int)
        ky = np.rint(radii * np.sin(ang)).astype(int)
        inside = (kx >= -half) & (kx < n - half) & (ky >= -half) & (ky < n - half)
        pts.append(np.stack([kx[inside], ky[inside]], axis=1))
    lo = -(lowpass // 2)
    sq = np.arange(lo, lo + lowpass)
    sq = sq[(sq >= -half) & (sq < n - half)]
    kx, ky = np.meshgrid(sq, sq, indexing="ij")
    pts.append(np.stack([kx.ravel(), ky.ravel()], axis=1))
    pts.append(np.zeros((1, 2), dtype=int))
    return np.unique(np.concatenate(pts), axis=0)


class FourierSampling(LinearOperator):
    """Orthonormal 2-D DFT gathered at a set of centered integer frequencies.

    ``ref_shape`` is the grid the data were defined on; on a coarser grid the
    coefficients are rescaled by ``ref/n`` and phase-shifted so that both
    discretizations agree on the underlying continuous image.
    """

    kind = "fourier_mask"
    complex_domain = True
    requires_complex = True

    def __init__(self, grid: Grid, freqs, ref_shape=None, scale: float = 1.0):
        super().__init__(grid, scale)
        self.freqs = np.asarray(freqs, dtype=int).reshape(-1, 2)
        self.ref_shape = tuple(ref_shape) if ref_shape is not None else grid.shape
        n0, n1 = grid.shape
        r0, r1 = self.ref_shape
        k0, k1 = self.freqs[:, 0], self.freqs[:, 1]
        self.index = (np.mod(k0, n0), np.mod(k1, n1))
        phase = np.pi * (k0 * (1.0 / r0 - 1.0 / n0) + k1 * (1.0 / r1 - 1.0 / n1))
        self.factor = np.sqrt(r0 * r1 / (n0 * n1)) * np.exp(1j * phase)

    @classmethod
    def radial(cls, grid: Grid, spokes: int = 15, lowpass: int = 10, scale: float = 1.0):
        return cls(grid, radial_mask(grid.shape[0], spokes, lowpass), scale=scale)

    @property
    def range_shape(self):
        return (len(self.freqs),)

    def retained_fraction(self) -> float:
        return len(self.freqs) / self.grid.size

    def _apply(self, u):
        return np.fft.fft2(u, norm="ortho")[self.index] * self.factor

    def _adjoint(self, y):
        k = np.zeros(self.grid.shape, dtype=np.complex128)
        k[self.index] = y * np.conj(self.factor)
        return np.fft.ifft2(k, norm="ortho")

    def with_scale(self, scale):
        return FourierSampling(self.grid, self.freqs, self.ref_shape, scale)

    def coarsen(self, grid):
        n0, n1 = grid.shape
        k0, k1 = self.freqs[:, 0], self.freqs[:, 1]
        keep = (2 * np.abs(k0) < n0) & (2 * np.abs(k1) < n1)
        if grid.shape == self.grid.shape:
            keep[:] = True
        sel = np.flatnonzero(keep)
        op = FourierSampling(grid, self.freqs[sel], self.ref_shape, self.scale)
        return op, (None if len(sel) == len(self.freqs) else sel)

    def to_config(self):
        return {
            "kind": "fourier_mask",
            "shape": list(self.grid.shape),
            "ref_shape": list(self.ref_shape),
            "freqs": self.freqs.tolist(),
            "scale": self.scale,
        }


# --- parallel-beam Radon transform -------------------------------------------


def siddon_matrix(grid: Grid, angles, bins: int, half_width: float | None = None) -> sp.csr_matrix:
    """Exact ray/pixel intersection lengths for parallel rays.

    Ray ``(a, j)`` is the line ``{x : <x, (cos a, sin a)> = s_j}`` with detector
    offsets ``s_j`` at bin centers over ``[-half_width, half_width]``.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if half_width is None:
        half_width = float(np.hypot(*(np.asarray(grid.shape) * grid.spacing) / 2))
    s = -half_width + (np.arange(bins) + 0.5) * (2.0 * half_width / bins)
    n0, n1 = grid.shape
    lo = np.asarray(grid.origin)
    hi = lo + np.asarray(grid.shape) * np.asarray(grid.spacing)
    lines0 = lo[0] + np.arange(n0 + 1) * grid.spacing[0]
    lines1 = lo[1] + np.arange(n1 + 1) * grid.spacing[1]
    rows, cols, vals = [], [], []
    big = 1e30
    for a_idx, ang in enumerate(angles):
        c, sn = np.cos(ang), np.sin(ang)
        d = np.array([-sn, c])
        p0 = np.stack([s * c, s * sn], axis=1)  # (bins, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            if abs(d[0]) > 1e-12:
                ta = (lines0[None, :] - p0[:, :1]) / d[0]
                e0 = np.sort(np.stack([(lo[0] - p0[:, 0]) / d[0], (hi[0] - p0[:, 0]) / d[0]]), axis=0)
            else:
                ta = np.full((bins, 0), 0.0)
                inside = (p0[:, 0] > lo[0]) & (p0[:, 0] < hi[0])
                e0 = np.stack([np.where(inside, -big, big), np.where(inside, big, -big)])
            if abs(d[1]) > 1e-12:
                tb = (lines1[None, :] - p0[:, 1:]) / d[1]
                e1 = np.sort(np.stack([(lo[1] - p0[:, 1]) / d[1], (hi[1] - p0[:, 1]) / d[1]]), axis=0)
            else:
                tb = np.full((bins, 0), 0.0)
                inside = (p0[:, 1] > lo[1]) & (p0[:, 1] < hi[1])
                e1 = np.stack([np.where(inside, -big, big), np.where(inside, big, -big)])
        t_in = np.maximum(e0[0], e1[0])
        t_out = np.minimum(e0[1], e1[1])
        hit = t_in < t_out
        if not np.any(hit):
            continue
        t_in, t_out = t_in[hit], t_out[hit]
        ts = np.concatenate([ta[hit], tb[hit], t_in[:, None], t_out[:, None]], axis=1)
        ts = np.sort(np.clip(ts, t_in[:, None], t_out[:, None]), axis=1)
        seg = np.diff(ts, axis=1)
        mid = 0.5 * (ts[:, 1:] + ts[:, :-1])
        pts = p0[hit][:, None, :] + mid[..., None] * d
        i0 = np.clip(np.floor((pts[..., 0] - lo[0]) / grid.spacing[0]).astype(int), 0, n0 - 1)
        i1 = np.clip(np.floor((pts[..., 1] - lo[1]) / grid.spacing[1]).astype(int), 0, n1 - 1)
        keep = seg > 1e-14
        ray = a_idx * bins + np.flatnonzero(hit)
        rows.append(np.broadcast_to(ray[:, None], seg.shape)[keep])
        cols.append((i0 * n1 + i1)[keep])
        vals.append(seg[keep])
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(len(angles) * bins, grid.size))
    return m.tocsr()


class Radon(LinearOperator):
    """Parallel-beam line integrals; data shape ``(len(angles), bins)``."""

    kind = "radon"

    def __init__(self, grid: Grid, angles, bins: int, half_width: float | None = None, scale: float = 1.0):
        super().__init__(grid, scale)
        self.angles = np.asarray(angles, dtype=np.float64)
        self.bins = int(bins)
        if half_width is None:
            half_width = float(np.hypot(*(np.asarray(grid.shape) * grid.spacing) / 2))
        self.half_width = float(half_width)

    @classmethod
    def equispaced(cls, grid: Grid, n_angles: int, bins: int, scale: float = 1.0):
        """Angles ``pi k / n_angles`` for ``k = 1..n_angles``, i.e. equispaced in (0, pi]."""
        angles = np.pi * np.arange(1, n_angles + 1) / n_angles
        return cls(grid, angles, bins, scale=scale)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return siddon_matrix(self.grid, self.angles, self.bins, self.half_width)

    @cached_property
    def _matrix_t(self) -> sp.csr_matrix:
        return self.matrix.T.tocsr()

    @property
    def range_shape(self):
        return (len(self.angles), self.bins)

    def _apply(self, u):
        return (self.matrix @ np.real(u).ravel()).reshape(self.range_shape)

    def _adjoint(self, y):
        return (self._matrix_t @ y.ravel()).reshape(self.grid.shape)

    def with_scale(self, scale):
        op = Radon(self.grid, self.angles, self.bins, self.half_width, scale)
        if "matrix" in self.__dict__:
            op.__dict__["matrix"] = self.matrix
        return op

    def coarsen(self, grid):
        if grid == self.grid:
            return self, None
        return Radon(grid, self.angles, self.bins, self.half_width, self.scale), None

    def to_config(self):
        return {
            "kind": "radon",
            "shape": list(self.grid.shape),
            "angles": self.angles.tolist(),
            "bins": self.bins,
            "half_width": self.half_width,
            "scale": self.scale,
        }


def operator_from_config(cfg: dict) -> LinearOperator:
    kind = cfg["kind"]
    grid = Grid.standard(tuple(cfg["shape"]))
    scale = cfg.get("scale", 1.0)
    if kind == "identity":
        return Identity(grid, scale)
    if kind == "downsample":
        return Resample(grid, cfg["out_shape"], scale)
    if kind == "fourier_mask":
        return FourierSampling(grid, cfg["freqs"], cfg.get("ref_shape"), scale)
    if kind == "radon":
        return Radon(grid, cfg["angles"], cfg["bins"], cfg.get("half_width"), scale)
    raise ParamError(f"unknown operator kind {kind!r}")
