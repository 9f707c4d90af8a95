"""Cone-beam CT simulation, sparse-view artifact synthesis, denoising, and
two-stage sinus diagnosis.

Volumes cross the boundary as float32 numpy arrays in (z, y, x) order.
"""

from ._core import (
    Denoiser,
    DiagnosisModel,
    FieldOfViewError,
    Geometry,
    InsufficientCoverageError,
    NoSinusFoundError,
    TrainingFailureError,
    default_geometry,
    fdk_reconstruct,
    forward_project,
    generate_phantom,
    half_scan_angles,
    psnr,
    roc_auc,
    run_experiment,
    ssim,
    synthesize_pcbct,
    tv_denoise,
)

__all__ = [
    "Denoiser",
    "DiagnosisModel",
    "FieldOfViewError",
    "Geometry",
    "InsufficientCoverageError",
    "NoSinusFoundError",
    "TrainingFailureError",
    "default_geometry",
    "fdk_reconstruct",
    "forward_project",
    "generate_phantom",
    "half_scan_angles",
    "psnr",
    "roc_auc",
    "run_experiment",
    "ssim",
    "synthesize_pcbct",
    "tv_denoise",
]

__version__ = "0.1.0"
