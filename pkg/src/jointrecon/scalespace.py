"""Coarse-to-fine driver: resolution pyramid with decreasing regularization weights.

At each stage the side information is averaged down to the stage grid, the
current image is spline-upsampled onto it, the forward model is rediscretized
on that grid against the fixed data, and PALM runs with the stage weight.
Deformation parameters live in physical coordinates and carry over unchanged.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dtv import make_context
from .errors import ParamError, ScheduleError
from .fidelity import Fidelity
from .grid import Grid, ImageGrid
from .operators import LinearOperator, _overlap_matrix
from .palm import PalmConfig, PalmState, Problem, palm_run
from .warp import PARAMETRIZATIONS, Sampler, spline_coefficients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScaleSchedule:
    resolutions: tuple
    alphas: tuple

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolutions)
        alphas = tuple(float(a) for a in self.alphas)
        if not res or len(res) != len(alphas):
            raise ScheduleError("schedule needs equally many (>= 1) resolutions and alphas")
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ScheduleError(f"resolutions must be strictly increasing: {res}")
        if any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise ScheduleError(f"alphas must be strictly decreasing: {alphas}")
        if any(a <= 0 for a in alphas):
            raise ScheduleError("alphas must be positive")
        object.__setattr__(self, "resolutions", res)
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def halvings(cls, n: int, m: int, alpha: float, factor: float) -> ScaleSchedule:
        """``m`` stages ending at ``n``, each coarser stage half the size and ``factor`` times the weight."""
        res = [int(round(n / 2**k)) for k in range(m - 1, -1, -1)]
        return cls(res, [alpha * factor**k for k in range(m - 1, -1, -1)])

    def __len__(self):
        return len(self.resolutions)

    def last(self, m: int) -> ScaleSchedule:
        return ScaleSchedule(self.resolutions[-m:], self.alphas[-m:])


def downsample_image(v: ImageGrid, n) -> ImageGrid:
    """Area-weighted average of ``v`` onto the standard ``n`` grid (same physical domain)."""
    shape = (n, n) if np.isscalar(n) else tuple(n)
    if any(a > b for a, b in zip(shape, v.shape)):
        raise ParamError(f"cannot downsample {v.shape} to the larger {shape}")
    if shape == v.shape:
        return v
    r0 = _overlap_matrix(shape[0], v.shape[0])
    r1 = _overlap_matrix(shape[1], v.shape[1])
    return ImageGrid(r0 @ v.values @ r1.T, Grid.standard(shape))


def upsample_image(u: ImageGrid, n) -> ImageGrid:
    """Biquadratic-spline values of ``u`` at the pixel centers of the finer standard ``n`` grid."""
    shape = (n, n) if np.isscalar(n) else tuple(n)
    if any(a < b for a, b in zip(shape, u.shape)):
        raise ParamError(f"cannot upsample {u.shape} to the smaller {shape}")
    if shape == u.shape:
        return u
    fine = Grid.standard(shape)
    values = Sampler(u.grid, fine.coordinates()).evaluate(spline_coefficients(u.values))
    return ImageGrid(values, fine)


def resample_image(v: ImageGrid, n) -> ImageGrid:
    shape = (n, n) if np.isscalar(n) else tuple(n)
    if all(a <= b for a, b in zip(shape, v.shape)):
        return downsample_image(v, shape)
    return upsample_image(v, shape)


def _constant_start(problem, complex_image):
    """Constant image whose forward projection best matches the data mass."""
    ones = np.ones(problem.grid.shape, dtype=np.complex128 if complex_image else np.float64)
    a1 = problem.operator.apply(ones)
    fid = problem.fidelity
    if fid.kind == "kl":
        c = (fid.data.sum() - fid.background * fid.data.size) / a1.sum()
        return max(float(c), 0.0)
    c = np.vdot(a1, fid.data) / np.vdot(a1, a1)
    return c if complex_image else float(np.real(c))


@dataclass
class StageResult:
    resolution: int
    alpha: float
    u: ImageGrid
    phi: np.ndarray
    history: list
    seconds: float


@dataclass
class ScaleSpaceResult:
    u: ImageGrid
    phi: np.ndarray
    stages: list = field(default_factory=list)

    @property
    def history(self) -> list:
        return [rec for st in self.stages for rec in st.history]


@dataclass
class SolverSettings:
    gamma: float = 0.9995
    eps_rel: float = 0.01
    nonneg: bool = True
    parametrization: str = "affine"
    start: str = "constant"  # stage-1 image: best constant fit, or "zero"
    palm: PalmConfig = field(default_factory=PalmConfig)


def run_scalespace(f, operator: LinearOperator, v: ImageGrid, schedule: ScaleSchedule,
                   settings: SolverSettings | None = None, fidelity_kind: str = "l2",
                   background: float = 0.0, phi0=None, complex_image: bool | None = None,
                   callback=None) -> ScaleSpaceResult:
    """Solve the joint problem on ``operator.grid`` by the coarse-to-fine schedule.

    ``settings.palm.update_phi = False`` freezes the deformation at ``phi0``;
    ``settings.gamma = 0`` gives plain TV.
    """
    settings = settings or SolverSettings()
    if not isinstance(schedule, ScaleSchedule):
        schedule = ScaleSchedule(*schedule)
    target = operator.grid.shape
    if schedule.resolutions[-1] != target[0]:
        raise ScheduleError(f"last resolution {schedule.resolutions[-1]} != target {target[0]}")
    if complex_image is None:
        complex_image = operator.kind == "fourier_mask"
    param = PARAMETRIZATIONS[settings.parametrization]()
    phi = param.zero() if phi0 is None else np.asarray(phi0, dtype=np.float64).copy()
    fid = Fidelity(fidelity_kind, f, background)
    nonneg = settings.nonneg and not complex_image
    cfg = settings.palm
    state = PalmState(u=None, phi=phi, sigma=cfg.sigma0, tau=cfg.tau0)
    result = ScaleSpaceResult(u=None, phi=phi)
    u = None
    for i, (n, alpha) in enumerate(zip(schedule.resolutions, schedule.alphas)):
        t0 = time.perf_counter()
        grid = Grid.standard((n, n))
        v_i = resample_image(v, (n, n))
        ctx = make_context(v_i, alpha, settings.gamma, settings.eps_rel, nonneg)
        op_i, sel = operator.coarsen(grid)
        problem = Problem(op_i, fid.restrict(sel), ctx, param)
        if u is None:
            c0 = _constant_start(problem, complex_image) if settings.start == "constant" else 0.0
            u = ImageGrid(c0 * np.ones((n, n), dtype=np.complex128 if complex_image else np.float64), grid)
        else:
            u = upsample_image(u, (n, n))
        values = u.values
        if nonneg:
            values = np.maximum(values, 0.0)
        state.u = values
        state.dual = None
        state.history = []
        palm_run(state, problem, cfg, stage=i)
        u = ImageGrid(state.u, grid)
        stage = StageResult(n, alpha, u, state.phi.copy(), state.history, time.perf_counter() - t0)
        result.stages.append(stage)
        log.info("stage %d (%d^2, alpha=%.4g): objective %.6g, phi %s, %.1fs", i, n, alpha,
                 state.history[-1]["objective"], np.round(state.phi, 5).tolist(), stage.seconds)
        if callback is not None:
            callback(stage)
    result.u = u
    result.phi = state.phi.copy()
    return result
