"""Strict JSON configuration schema for datasets, reconstructions and sweeps."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- dataset ------------------------------------------------------------------


class PhantomConfig(Strict):
    kind: Literal["brain", "urban"] = "brain"
    n: int = Field(64, ge=32)
    side_n: Optional[int] = Field(None, ge=32)


class FourierConfig(Strict):
    kind: Literal["fourier_mask"]
    spokes: int = Field(15, ge=1)
    lowpass: int = Field(10, ge=0)


class RadonConfig(Strict):
    kind: Literal["radon"]
    angles: int = Field(200, ge=1)
    bins: int = Field(192, ge=1)


class DownsampleConfig(Strict):
    kind: Literal["downsample"]
    factor: int = Field(4, ge=1)


class IdentityConfig(Strict):
    kind: Literal["identity"]


OperatorConfig = Annotated[
    Union[FourierConfig, RadonConfig, DownsampleConfig, IdentityConfig], Field(discriminator="kind")
]


class DeformationConfig(Strict):
    """Ground-truth deformation; unset parameters take the per-kind defaults."""

    kind: Literal["identity", "rigid", "zoom", "shear", "nonlinear"] = "identity"
    theta: Optional[float] = None
    offset: Optional[tuple[float, float]] = None
    zoom: Optional[float] = Field(None, gt=0)
    shear: Optional[float] = None
    amplitude: Optional[float] = None


class GaussianNoise(Strict):
    kind: Literal["gaussian"]
    sigma_rel: float = Field(..., ge=0)


class PoissonNoise(Strict):
    kind: Literal["poisson"]
    background: float = Field(7.0, gt=0)
    counts: float = Field(..., gt=0)


NoiseConfig = Annotated[Union[GaussianNoise, PoissonNoise], Field(discriminator="kind")]


class DatasetConfig(Strict):
    name: str = "dataset"
    phantom: PhantomConfig = PhantomConfig()
    operator: OperatorConfig
    deformation: DeformationConfig = DeformationConfig()
    noise: NoiseConfig
    seed: int = Field(0, ge=0)


# --- reconstruction ----------------------------------------------------------


class ScheduleConfig(Strict):
    resolutions: list[int]
    alphas: list[float]

    @field_validator("resolutions")
    @classmethod
    def _increasing(cls, v):
        if not v:
            raise ValueError("schedule needs at least one resolution")
        if any(n < 3 for n in v):
            raise ValueError("resolutions must be at least 3")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("resolutions must be strictly increasing")
        return v

    @field_validator("alphas")
    @classmethod
    def _decreasing(cls, v):
        if any(a <= 0 for a in v):
            raise ValueError("alphas must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("alphas must be strictly decreasing")
        return v

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.resolutions) != len(self.alphas):
            raise ValueError("resolutions and alphas must have the same length")
        return self

    def last(self, m: int) -> ScheduleConfig:
        return ScheduleConfig(resolutions=self.resolutions[-m:], alphas=self.alphas[-m:])


class DtvConfig(Strict):
    gamma: float = Field(0.9995, ge=0, lt=1)
    eps_rel: float = Field(0.01, gt=0)
    nonneg: bool = True


class FidelityConfig(Strict):
    kind: Optional[Literal["l2", "kl"]] = None
    background: Optional[float] = Field(None, gt=0)


class PalmSettings(Strict):
    iterations: int = Field(500, ge=1)
    sigma0: float = Field(1.0, gt=0)
    tau0: float = Field(1.0, gt=0)
    grow: float = Field(2.0, ge=1)
    shrink: float = Field(0.5, gt=0, lt=1)
    max_halvings: int = Field(30, ge=1)
    prox_iters: int = Field(100, ge=1)
    prox_tol: float = Field(1e-6, ge=0)


class MiSettings(Strict):
    bins: int = Field(32, ge=8)
    pyramid_levels: int = Field(3, ge=1)
    theta_starts: list[float] = [-0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6]
    max_iter: int = Field(400, ge=1)


class ReconConfig(Strict):
    method: Literal["joint", "three_step", "tv_only", "dtv_frozen"] = "joint"
    schedule: ScheduleConfig
    tv_schedule: Optional[ScheduleConfig] = None
    dtv: DtvConfig = DtvConfig()
    fidelity: FidelityConfig = FidelityConfig()
    palm: PalmSettings = PalmSettings()
    parametrization: Literal["affine", "rigid"] = "affine"
    start: Literal["constant", "zero"] = "constant"
    mi: MiSettings = MiSettings()
    phi_file: Optional[str] = None

    @model_validator(mode="after")
    def _needs(self):
        if self.method == "dtv_frozen" and self.phi_file is None:
            raise ValueError("method dtv_frozen needs phi_file")
        return self


class SweepConfig(Strict):
    thetas: list[float] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2]
    scale_sizes: list[int] = [1, 2, 3, 4, 5]
    success_rd: float = Field(20.0, gt=0)
    include_three_step: bool = False


class RunConfig(Strict):
    mode: Optional[Literal["simulate", "reconstruct", "baseline", "evaluate", "sweep"]] = None
    dataset: Optional[str] = None
    simulate: Optional[DatasetConfig] = None
    reconstruct: Optional[ReconConfig] = None
    sweep: Optional[SweepConfig] = None
    output: Optional[str] = None
    seed: Optional[int] = Field(None, ge=0)
    save_stages: bool = False


def _path(loc) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        elif item in ("fourier_mask", "radon", "downsample", "identity", "gaussian", "poisson"):
            continue  # discriminator tags
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts)


def validate(model, data):
    """Validate ``data`` against ``model``; failures raise ConfigError naming the field."""
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(err["msg"], _path(err["loc"]) or "<root>") from None


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return validate(RunConfig, data)
