"""A small numpy reverse-mode autodiff engine and the 2D/3D U-Net built on it."""
from .checkpoint import load_checkpoint, save_checkpoint
from .ops import concat, conv_forward, dice_bce_loss, maxpool, relu, sigmoid, upconv
from .optim import OptimState, adamw_step, cosine_lr
from .tensor import Tensor, backward, no_grad
from .unet import UNet, UNetConfig, build_unet, forward, parameter_shapes

__all__ = [
    "OptimState",
    "Tensor",
    "UNet",
    "UNetConfig",
    "adamw_step",
    "backward",
    "build_unet",
    "concat",
    "conv_forward",
    "cosine_lr",
    "dice_bce_loss",
    "forward",
    "load_checkpoint",
    "maxpool",
    "no_grad",
    "parameter_shapes",
    "relu",
    "save_checkpoint",
    "sigmoid",
    "upconv",
]
