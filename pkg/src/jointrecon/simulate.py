"""Synthetic datasets: phantom pairs, ground-truth deformations, forward simulation, noise.

Convention: the ground truth ``u_gt`` is aligned with the side information
``v``; the measured data come from the deformed truth ``u_gt o phi_gt``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import DatasetConfig, DeformationConfig, validate
from .errors import ConfigError, ParamError
from .grid import Grid, ImageGrid
from .operators import FourierSampling, Identity, LinearOperator, Radon, Resample, operator_from_config
from .warp import DeformationField, affine_params, rotation, warp

RNG_NAME = "numpy.PCG64"

# (center, semi-axes, angle, u value, parent index or None); values are absolute levels
_BRAIN = [
    ((0.0, 0.0), (0.88, 0.72), 0.0, 0.25, None),  # scalp / skull
    ((0.0, 0.0), (0.80, 0.64), 0.0, 0.55, 0),  # brain
    ((-0.12, 0.14), (0.26, 0.07), 0.0, 0.95, 1),  # ventricle
    ((-0.12, -0.14), (0.26, 0.07), 0.0, 0.95, 1),  # ventricle
    ((0.38, 0.22), (0.13, 0.13), 0.0, 0.15, 1),
    ((0.42, -0.28), (0.16, 0.09), 0.6, 0.80, 1),
    ((-0.52, 0.0), (0.08, 0.20), 0.0, 0.35, 1),
    ((0.12, 0.0), (0.07, 0.07), 0.0, 1.00, 1),
]
_BRAIN_EXTRA = ((-0.50, 0.36), (0.07, 0.07), 0.0)

_URBAN = [
    ((-0.45, -0.45), (0.35, 0.30), 0.0, 0.70, None),
    ((-0.45, -0.45), (0.15, 0.12), 0.0, 0.20, 0),  # courtyard
    ((0.40, -0.50), (0.40, 0.22), 0.0, 0.45, None),
    ((0.40, -0.50), (0.10, 0.10), 0.0, 0.95, 2),
    ((-0.40, 0.45), (0.25, 0.40), 0.0, 0.90, None),
    ((0.45, 0.30), (0.35, 0.45), 0.0, 0.30, None),
    ((0.45, 0.30), (0.20, 0.15), 0.0, 0.80, 5),
    ((-0.02, 0.00), (0.07, 0.07), 0.0, 1.00, None),
]
_URBAN_EXTRA = ((-0.85, 0.0), (0.08, 0.12), 0.0)

_PHANTOMS = {"brain": (_BRAIN, _BRAIN_EXTRA, "ellipse"), "urban": (_URBAN, _URBAN_EXTRA, "rect")}


def _inside(x0, x1, center, axes, angle, shape):
    c, s = np.cos(angle), np.sin(angle)
    d0, d1 = x0 - center[0], x1 - center[1]
    r0 = (c * d0 + s * d1) / axes[0]
    r1 = (-s * d0 + c * d1) / axes[1]
    if shape == "ellipse":
        return r0 * r0 + r1 * r1 <= 1.0
    return (np.abs(r0) <= 1.0) & (np.abs(r1) <= 1.0)


def _rasterize(regions, values, shape_kind, n, supersample=4):
    """Pixel averages of a piecewise-constant image over the grid of [-1, 1]^2."""
    m = n * supersample
    x = -1.0 + (np.arange(m) + 0.5) * (2.0 / m)
    x0, x1 = np.meshgrid(x, x, indexing="ij")
    img = np.zeros((m, m))
    for (center, axes, angle), val in zip(regions, values):
        img[_inside(x0, x1, center, axes, angle, shape_kind)] = val
    return img.reshape(n, supersample, n, supersample).mean(axis=(1, 3))


def _side_values(u_vals, parents, rng):
    """Contrast levels for the side information.

    Each region keeps a jump of at least 0.3 to its parent; about half of the
    jumps flip sign relative to the ground truth.
    """
    v_vals = []
    for k, (uv, parent) in enumerate(zip(u_vals, parents)):
        base = 0.0 if parent is None else v_vals[parent]
        ubase = 0.0 if parent is None else u_vals[parent]
        sign = np.sign(uv - ubase) or 1.0
        if rng.random() < 0.5:
            sign = -sign
        jump = rng.uniform(0.3, 0.6)
        val = base + sign * jump
        if val < 0.0 or val > 1.0:
            val = base - sign * jump
        v_vals.append(float(np.clip(val, 0.0, 1.0)))
    return v_vals


def make_phantom(kind: str, n: int, seed: int = 0, side_n: int | None = None):
    """Ground truth in [0, 1] with zero background and a side image of different contrast.

    The side image shares every edge of the ground truth, uses independently
    drawn levels and contains one extra structure absent from the ground truth.
    """
    if kind not in _PHANTOMS:
        raise ParamError(f"unknown phantom kind {kind!r}")
    if n < 32 or (side_n is not None and side_n < 32):
        raise ParamError("phantom resolution must be at least 32")
    regions, extra, shape_kind = _PHANTOMS[kind]
    geom = [r[:3] for r in regions]
    u_vals = [r[3] for r in regions]
    parents = [r[4] for r in regions]
    rng = np.random.default_rng(seed)
    v_vals = _side_values(u_vals, parents, rng)
    extra_val = float(rng.uniform(0.3, 0.7))
    u = _rasterize(geom, u_vals, shape_kind, n)
    vn = n if side_n is None else side_n
    v = _rasterize(geom + [extra], v_vals + [extra_val], shape_kind, vn)
    return ImageGrid.standard(u), ImageGrid.standard(v)


# --- ground-truth deformations ---------------------------------------------

DEFAULTS = {
    "identity": {},
    "rigid": {"theta": 0.1, "offset": (0.02, 0.08)},
    "zoom": {"theta": 0.1, "offset": (-0.02, -0.08), "zoom": 0.85},
    "shear": {"shear": 0.08, "offset": (0.06, -0.04)},
    "nonlinear": {"theta": 0.1, "offset": (0.06, -0.04), "amplitude": 0.05},
}


@dataclass
class GroundTruth:
    kind: str
    params: dict
    affine: np.ndarray | None  # None for non-affine kinds

    def field(self, grid: Grid) -> DeformationField:
        return ground_truth_field(self.kind, grid, **self.params)


def ground_truth(cfg: DeformationConfig | dict | str) -> GroundTruth:
    if isinstance(cfg, str):
        cfg = DeformationConfig(kind=cfg)
    elif isinstance(cfg, dict):
        cfg = validate(DeformationConfig, cfg)
    params = dict(DEFAULTS[cfg.kind])
    for key in ("theta", "offset", "zoom", "shear", "amplitude"):
        val = getattr(cfg, key)
        if val is not None:
            if key not in DEFAULTS[cfg.kind]:
                raise ConfigError(f"not a parameter of a {cfg.kind} deformation", f"deformation.{key}")
            params[key] = tuple(val) if key == "offset" else float(val)
    return GroundTruth(cfg.kind, params, _affine_of(cfg.kind, params))


def _linear_part(kind, params):
    if kind == "identity":
        return np.eye(2), np.zeros(2)
    b = np.asarray(params["offset"], dtype=np.float64)
    if kind in ("rigid", "nonlinear"):
        return rotation(params["theta"]), b
    if kind == "zoom":
        return params["zoom"] * rotation(params["theta"]), b
    if kind == "shear":
        return np.array([[1.0, params["shear"]], [0.0, 1.0]]), b
    raise ParamError(f"unknown deformation kind {kind!r}")


def _affine_of(kind, params):
    if kind == "nonlinear":
        return None
    m, b = _linear_part(kind, params)
    return affine_params(m, b)


def ground_truth_field(kind: str, grid, **params) -> DeformationField:
    """Dense field at the pixel centers of ``grid``; missing parameters use defaults."""
    if kind not in DEFAULTS:
        raise ParamError(f"unknown deformation kind {kind!r}")
    if not isinstance(grid, Grid):
        grid = Grid.standard(grid)
    full = dict(DEFAULTS[kind])
    full.update(params)
    m, b = _linear_part(kind, full)
    x = grid.coordinates()
    values = np.einsum("ij,j...->i...", m, x) + b[:, None, None]
    if kind == "nonlinear":
        values = values + full["amplitude"] * np.stack([x[1] ** 2, -(x[0] ** 3)])
    return DeformationField(values, grid)


# --- datasets ------------------------------------------------------------------


@dataclass
class Dataset:
    config: DatasetConfig
    f: np.ndarray
    operator: LinearOperator
    v: ImageGrid
    u_gt: ImageGrid
    truth: GroundTruth
    u_deformed: ImageGrid
    extra: dict = field(default_factory=dict)

    @property
    def fidelity_kind(self) -> str:
        return "kl" if self.config.noise.kind == "poisson" else "l2"

    @property
    def background(self) -> float:
        return self.config.noise.background if self.config.noise.kind == "poisson" else 0.0

    @property
    def complex_image(self) -> bool:
        return self.operator.kind == "fourier_mask"


def _build_operator(cfg: DatasetConfig, grid: Grid) -> LinearOperator:
    op = cfg.operator
    if op.kind == "fourier_mask":
        return FourierSampling.radial(grid, op.spokes, op.lowpass)
    if op.kind == "radon":
        return Radon.equispaced(grid, op.angles, op.bins)
    if op.kind == "downsample":
        return Resample.by_factor(grid, op.factor)
    return Identity(grid)


def simulate_dataset(config) -> Dataset:
    cfg = config if isinstance(config, DatasetConfig) else validate(DatasetConfig, config)
    n = cfg.phantom.n
    u_gt, v = make_phantom(cfg.phantom.kind, n, cfg.seed, cfg.phantom.side_n)
    truth = ground_truth(cfg.deformation)
    grid = u_gt.grid
    u_def = u_gt if truth.kind == "identity" else warp(u_gt, truth.field(grid))
    op = _build_operator(cfg, grid)
    image = u_def.values.astype(np.complex128) if op.kind == "fourier_mask" else u_def.values
    clean = op.apply(image)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    noise = cfg.noise
    if noise.kind == "gaussian":
        sigma = noise.sigma_rel * float(np.sqrt(np.mean(np.abs(clean) ** 2)))
        if np.iscomplexobj(clean):
            # per-component sigma/sqrt(2) so the complex noise has RMS sigma
            f = clean + (sigma / np.sqrt(2.0)) * (
                rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
            )
        else:
            f = clean + sigma * rng.standard_normal(clean.shape)
        extra = {"sigma": sigma}
    else:
        if np.any(clean < 0):
            clean = np.maximum(clean, 0.0)
        total = float(clean.sum())
        budget = noise.counts - noise.background * clean.size
        if budget <= 0 or total <= 0:
            raise ConfigError("count budget does not exceed the background", "simulate.noise.counts")
        scale = budget / total
        op = op.with_scale(scale)
        mean = scale * clean + noise.background
        f = rng.poisson(mean).astype(np.float64)
        extra = {"scale": scale, "expected_counts": float(mean.sum())}
    return Dataset(cfg, f, op, v, u_gt, truth, u_def, extra)


def save_dataset(ds: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_grd(out / "f.grd", ds.f)
    io.write_grd(out / "v.grd", ds.v)
    io.write_grd(out / "u_gt.grd", ds.u_gt)
    io.write_json(
        out / "phi_gt.json",
        {
            "kind": ds.truth.kind,
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in ds.truth.params.items()},
            "affine": None if ds.truth.affine is None else ds.truth.affine.tolist(),
        },
    )
    io.write_json(
        out / "dataset.json",
        {
            "config": ds.config.model_dump(mode="json"),
            "seed": ds.config.seed,
            "rng": RNG_NAME,
            "operator": ds.operator.to_config(),
            "extra": ds.extra,
            "provenance": {"generator": "jointrecon.simulate", "convention": "f = A(u_gt o phi_gt) + noise"},
        },
    )
    return out


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = io.read_json(path / "dataset.json")
    cfg = validate(DatasetConfig, meta["config"])
    gt = io.read_json(path / "phi_gt.json")
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in gt["params"].items()}
    affine = None if gt["affine"] is None else np.asarray(gt["affine"])
    truth = GroundTruth(gt["kind"], params, affine)
    u_gt = io.read_grd(path / "u_gt.grd")
    op = operator_from_config(meta["operator"])
    u_def = u_gt if truth.kind == "identity" else warp(u_gt, truth.field(u_gt.grid))
    return Dataset(
        cfg, io.read_grd(path / "f.grd").values, op, io.read_grd(path / "v.grd"), u_gt, truth, u_def,
        meta.get("extra", {}),
    )
