"""Joint reconstruction and parametric registration with directional total variation.

Solves ``min_{u, phi} D(A (u o P(phi)); f) + alpha * dTV(u; v)`` where ``v`` is a
structural side image from another contrast or modality, using alternating
proximal-gradient steps inside a coarse-to-fine loop.
"""
from .baseline import mi_register, mutual_information, three_step
from .dtv import dtv_prox, dtv_value, make_context, tv_value
from .errors import (
    BacktrackExhausted,
    ConfigError,
    DomainError,
    FieldMismatch,
    MissingArtifact,
    ParamError,
    ReconError,
    ScheduleError,
    ShapeMismatch,
    ShapeTooSmall,
)
from .fidelity import Fidelity
from .grid import Grid, ImageGrid, divergence, gradient
from .metrics import relative_difference, ssim
from .operators import FourierSampling, Identity, Radon, Resample
from .palm import PalmConfig, PalmState, Problem, palm_run
from .scalespace import ScaleSchedule, SolverSettings, downsample_image, run_scalespace, upsample_image
from .simulate import make_phantom, simulate_dataset
from .warp import affine_field, warp

__version__ = "0.1.0"

__all__ = [
    "BacktrackExhausted", "ConfigError", "DomainError", "FieldMismatch", "Fidelity", "FourierSampling", "Grid",
    "Identity", "ImageGrid", "MissingArtifact", "PalmConfig", "PalmState", "ParamError", "Problem", "Radon",
    "ReconError", "Resample", "ScaleSchedule", "ScheduleError", "ShapeMismatch", "ShapeTooSmall", "SolverSettings",
    "affine_field", "divergence", "downsample_image", "dtv_prox", "dtv_value", "gradient", "make_context",
    "make_phantom", "mi_register", "mutual_information", "palm_run", "relative_difference", "run_scalespace",
    "simulate_dataset", "ssim", "three_step", "tv_value", "upsample_image", "warp",
]
