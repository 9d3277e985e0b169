"""Neural contour reconstruction from dual-channel power tensors."""

from .data import Manifest, PsdPairs, load_manifest, normalize_psd
from .metrics import mae, reconstruction_loss, ssim
from .model import (ExternalAttention, MEALayer, NetworkConfig, Psd2ImageNet,
                    ResConvDown, ResConvUp, reshape_input)
from .tensorio import (ContainerError, read_tensor, write_tensor,
                       write_tensor_atomic)
from .train import (TrainConfig, evaluate_loss, load_checkpoint, predict,
                    train)

__all__ = [
    "ContainerError", "ExternalAttention", "MEALayer", "Manifest",
    "NetworkConfig", "Psd2ImageNet", "PsdPairs", "ResConvDown", "ResConvUp",
    "TrainConfig", "evaluate_loss", "load_checkpoint", "load_manifest",
    "mae", "normalize_psd", "predict", "read_tensor", "reconstruction_loss",
    "reshape_input", "ssim", "train", "write_tensor", "write_tensor_atomic",
]
