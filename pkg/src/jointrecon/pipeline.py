"""Glue between validated run configurations and the solvers."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .baseline import MiOptions, three_step
from .config import ReconConfig, ScheduleConfig
from .errors import ConfigError, MissingArtifact
from .metrics import MetricsReport, max_displacement_px, relative_difference, ssim
from .palm import PalmConfig
from .scalespace import ScaleSchedule, SolverSettings, run_scalespace
from .simulate import Dataset
from .warp import PARAMETRIZATIONS


def schedule_of(cfg: ScheduleConfig) -> ScaleSchedule:
    return ScaleSchedule(cfg.resolutions, cfg.alphas)


def settings_of(rc: ReconConfig) -> SolverSettings:
    p = rc.palm
    palm = PalmConfig(p.iterations, p.sigma0, p.tau0, p.grow, p.shrink, p.max_halvings, p.prox_iters, p.prox_tol)
    return SolverSettings(rc.dtv.gamma, rc.dtv.eps_rel, rc.dtv.nonneg, rc.parametrization, rc.start, palm)


def mi_options_of(rc: ReconConfig) -> MiOptions:
    m = rc.mi
    return MiOptions(m.bins, m.pyramid_levels, tuple(m.theta_starts), m.max_iter)


def tv_schedule_of(rc: ReconConfig) -> ScaleSchedule:
    if rc.tv_schedule is not None:
        return schedule_of(rc.tv_schedule)
    # one order of magnitude below the dTV weights
    s = schedule_of(rc.schedule)
    return ScaleSchedule(s.resolutions, [a / 10.0 for a in s.alphas])


def read_phi(path) -> np.ndarray:
    """Affine parameters from a ``phi.json`` (key ``affine``) or a ground-truth file."""
    data = io.read_json(path)
    if data.get("affine") is None:
        raise ConfigError(f"{path} holds no affine parameters", "reconstruct.phi_file")
    return np.asarray(data["affine"], dtype=np.float64)


@dataclass
class Reconstruction:
    method: str
    u: object
    phi: np.ndarray  # in the configured parametrization
    affine: np.ndarray
    stages: list
    seconds: float
    extra: dict = field(default_factory=dict)

    @property
    def history(self) -> list:
        return [rec for st in self.stages for rec in st.history]


def reconstruct(ds: Dataset, rc: ReconConfig, base_dir=None) -> Reconstruction:
    """Run the configured method on ``ds``."""
    t0 = time.perf_counter()
    settings = settings_of(rc)
    fid_kind = rc.fidelity.kind or ds.fidelity_kind
    background = rc.fidelity.background if rc.fidelity.background is not None else ds.background
    if fid_kind == "kl" and not background > 0:
        raise ConfigError("KL fidelity needs a positive background", "reconstruct.fidelity.background")
    common = dict(fidelity_kind=fid_kind, background=background)
    schedule = schedule_of(rc.schedule)
    param = PARAMETRIZATIONS[rc.parametrization]()
    frozen = replace(settings, palm=replace(settings.palm, update_phi=False))
    extra = {}
    if rc.method == "joint":
        res = run_scalespace(ds.f, ds.operator, ds.v, schedule, settings, **common)
        u, phi, stages = res.u, res.phi, res.stages
    elif rc.method == "tv_only":
        res = run_scalespace(ds.f, ds.operator, ds.v, tv_schedule_of(rc), replace(frozen, gamma=0.0), **common)
        u, phi, stages = res.u, res.phi, res.stages
    elif rc.method == "dtv_frozen":
        path = Path(rc.phi_file)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.exists():
            raise MissingArtifact(f"missing file: {path}")
        affine = read_phi(path)
        frozen = replace(frozen, parametrization="affine")
        param = PARAMETRIZATIONS["affine"]()
        res = run_scalespace(ds.f, ds.operator, ds.v, schedule, frozen, phi0=affine, **common)
        u, phi, stages = res.u, res.phi, res.stages
    else:
        out = three_step(ds.f, ds.operator, ds.v, schedule, tv_schedule_of(rc),
                         replace(settings, parametrization="affine"), mi=mi_options_of(rc), **common)
        param = PARAMETRIZATIONS["affine"]()
        u, phi, stages = out.u, out.phi, out.stages
        reg = out.registration
        extra = {"mi": reg.mi, "mi_identity": reg.mi_identity, "registration_failed": reg.failed}
    return Reconstruction(rc.method, u, np.asarray(phi), param.to_affine(phi), stages,
                          time.perf_counter() - t0, extra)


def evaluate(ds: Dataset, u, affine) -> MetricsReport:
    """SSIM against the aligned ground truth; RD and pixel error only for affine ground truths."""
    score = ssim(u, ds.u_gt)
    if ds.truth.affine is None:
        return MetricsReport(score)
    gt = ds.truth.affine
    rd = relative_difference(affine, gt) if np.linalg.norm(gt) > 0 else None
    return MetricsReport(score, rd, max_displacement_px(affine, gt, ds.u_gt.grid))
