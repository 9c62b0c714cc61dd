"""Image-adaptive 3D LUT enhancement: attention-fused CP factors over numpy."""
from .image import PpmError, bilinear_resize, read_ppm, write_ppm
from .lut import (
    CubeParseError,
    Lut3D,
    apply_trilinear,
    apply_trilinear_parallel,
    compose_with_identity,
    enhance_residual,
    identity_lut,
    read_cube,
    write_cube,
)
from .losses import LossWeights, monotonicity_loss, mse_loss, smoothness_loss, total_loss
from .metrics import delta_e, psnr, ssim
from .model import ConfigError, ModelConfig, count_params, forward, init_params, predict_residual, zero_heads
from .tensor import GradientError, NonFiniteError, ShapeError, Tape, Tensor
from .train import DatasetError, PairedDataset, TrainConfig, TrainingError, evaluate
from .weights import ContainerError, load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContainerError", "CubeParseError", "DatasetError", "GradientError", "LossWeights",
    "Lut3D", "ModelConfig", "NonFiniteError", "PairedDataset", "PpmError", "ShapeError", "Tape", "Tensor",
    "TrainConfig", "TrainingError", "apply_trilinear", "apply_trilinear_parallel", "bilinear_resize",
    "compose_with_identity", "count_params", "delta_e", "enhance_residual", "evaluate", "forward",
    "identity_lut", "init_params", "load_weights", "monotonicity_loss", "mse_loss", "predict_residual",
    "psnr", "read_cube", "read_ppm", "save_weights", "smoothness_loss", "ssim", "total_loss", "write_cube",
    "write_ppm", "zero_heads",
]
