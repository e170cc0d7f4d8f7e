"""Sequential comparison method: TV reconstruction, MI registration, frozen-deformation dTV."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import ShapeMismatch
from .grid import ImageGrid, values_of
from .scalespace import ScaleSchedule, SolverSettings, resample_image, run_scalespace
from .warp import affine_field, affine_params, invert_affine, rotation, warp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MiOptions:
    bins: int = 32
    pyramid_levels: int = 3
    theta_starts: tuple = (-0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6)
    max_iter: int = 400
    min_size: int = 16

    def __post_init__(self):
        if self.bins < 8:
            raise ValueError("MI needs at least 8 bins")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid depth must be at least 1")


def _real(a) -> np.ndarray:
    a = values_of(a)
    return np.abs(a) if np.iscomplexobj(a) else np.asarray(a, dtype=np.float64)


def _linear_bins(a, bins):
    lo, hi = float(a.min()), float(a.max())
    # rounding jitter on a constant image must not fill the whole range
    flat = hi - lo <= 1e-9 * max(abs(lo), abs(hi), 1.0)
    t = np.zeros_like(a) if flat else (a - lo) * ((bins - 1) / (hi - lo))
    i0 = np.minimum(np.floor(t).astype(np.intp), bins - 2)
    w1 = t - i0
    return i0.ravel(), w1.ravel()


def joint_histogram(a, b, bins: int = 32) -> np.ndarray:
    """Partial-volume joint histogram normalized to a probability table."""
    a, b = _real(a), _real(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"MI shapes differ: {a.shape} vs {b.shape}")
    ia, wa = _linear_bins(a, bins)
    ib, wb = _linear_bins(b, bins)
    h = np.zeros(bins * bins)
    for da, fa in ((0, 1.0 - wa), (1, wa)):
        for db, fb in ((0, 1.0 - wb), (1, wb)):
            h += np.bincount((ia + da) * bins + ib + db, weights=fa * fb, minlength=bins * bins)
    return h.reshape(bins, bins) / a.size


def mutual_information(a, b, bins: int = 32) -> float:
    p = joint_histogram(a, b, bins)
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    nz = p > 0
    outer = pa[:, None] * pb[None, :]
    return float(np.sum(p[nz] * np.log(p[nz] / outer[nz])))


@dataclass
class Registration:
    phi: np.ndarray  # data-model convention: u_tilde ~ v o P(phi)
    psi: np.ndarray  # maximizer of MI(v, u_tilde o P(psi))
    mi: float
    mi_identity: float
    failed: bool
    candidates: list = field(default_factory=list)


def _pyramid(img: ImageGrid, levels: int, min_size: int) -> list:
    out = [img]
    for _ in range(levels - 1):
        n = out[-1].shape[0] // 2
        if n < min_size:
            break
        out.append(resample_image(out[-1], (n, n)))
    return out[::-1]


def _neg_mi(psi, v, ut, bins):
    moved = warp(ut, affine_field(psi, ut.grid))
    return -mutual_information(v.values, moved.values, bins)


def _simplex(x0, pixel):
    steps = np.array([0.05, 0.05, 0.05, 0.05, 2 * pixel, 2 * pixel])
    return np.vstack([x0] + [x0 + s * e for s, e in zip(steps, np.eye(6))])


def mi_register(v, u_tilde, options: MiOptions | None = None) -> Registration:
    """Affine registration of ``u_tilde`` to ``v`` by maximal mutual information.

    Every rotation start is refined through the pyramid with a Nelder-Mead
    simplex; the candidate with the largest finest-level MI wins (ties go to
    the earlier start).
    """
    opts = options or MiOptions()
    ut = u_tilde if isinstance(u_tilde, ImageGrid) else ImageGrid.standard(u_tilde)
    ut = ImageGrid(_real(ut.values), ut.grid)
    v = v if isinstance(v, ImageGrid) else ImageGrid.standard(v)
    v = resample_image(ImageGrid(_real(v.values), v.grid), ut.shape)
    vs = _pyramid(v, opts.pyramid_levels, opts.min_size)
    us = _pyramid(ut, opts.pyramid_levels, opts.min_size)
    candidates = []
    for theta in opts.theta_starts:
        x = affine_params(rotation(theta), (0.0, 0.0))
        for vl, ul in zip(vs, us):
            res = minimize(
                _neg_mi, x, args=(vl, ul, opts.bins), method="Nelder-Mead",
                options={"initial_simplex": _simplex(x, ul.grid.spacing[0]), "maxiter": opts.max_iter,
                         "xatol": 1e-6, "fatol": 1e-9},
            )
            x = res.x
        candidates.append((-float(res.fun), x))
    best = max(range(len(candidates)), key=lambda k: (candidates[k][0], -k))
    mi_best, psi = candidates[best]
    mi_id = mutual_information(v.values, ut.values, opts.bins)
    failed = mi_best - mi_id < 1e-6
    if failed:
        log.warning("MI registration did not improve on the identity (%.6g vs %.6g)", mi_best, mi_id)
    return Registration(invert_affine(psi), psi, mi_best, mi_id, failed,
                        [(float(m), c.tolist()) for m, c in candidates])


@dataclass
class ThreeStepResult:
    u: ImageGrid
    phi: np.ndarray
    u_tv: ImageGrid
    registration: Registration
    stages: list


def three_step(f, operator, v, schedule: ScaleSchedule, tv_schedule: ScaleSchedule,
               settings: SolverSettings | None = None, fidelity_kind: str = "l2", background: float = 0.0,
               mi: MiOptions | None = None, phi_fixed=None) -> ThreeStepResult:
    """TV reconstruction, then MI registration, then dTV with the deformation frozen.

    With ``phi_fixed`` the first two steps are skipped and that deformation is used.
    """
    settings = settings or SolverSettings()
    frozen = replace(settings, palm=replace(settings.palm, update_phi=False))
    common = dict(fidelity_kind=fidelity_kind, background=background)
    if phi_fixed is None:
        tv = run_scalespace(f, operator, v, tv_schedule, replace(frozen, gamma=0.0), **common)
        reg = mi_register(v, tv.u, mi)
        u_tv, phi = tv.u, reg.phi
        stages = list(tv.stages)
    else:
        phi = np.asarray(phi_fixed, dtype=np.float64)
        reg, u_tv, stages = None, None, []
    final = run_scalespace(f, operator, v, schedule, frozen, phi0=phi, **common)
    return ThreeStepResult(final.u, final.phi, u_tv, reg, stages + final.stages)
