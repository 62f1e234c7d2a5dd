from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import BadShape
from .ops import concat, conv_forward, maxpool, relu, sigmoid, upconv
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class UNetConfig:
    dims: int = 2
    in_channels: int = 2
    out_channels: int = 1
    levels: int = 3
    base_width: int = 8

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        if self.levels < 1 or self.base_width < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"invalid U-Net config {self}")

    def width(self, level: int) -> int:
        return self.base_width * 2**level

    @property
    def divisor(self) -> int:
        """Every input spatial extent must be a multiple of this."""
        return 2 ** (self.levels - 1)

    def to_dict(self) -> dict:
        return asdict(self)


class UNet:
    """Encoder/decoder with skip connections; 3x3(x3) convs, 2x pooling, 2x up-convolutions.

    No normalization layers. The head is a 1x1 convolution followed by a sigmoid.
    """

    def __init__(self, cfg: UNetConfig, params: dict[str, Tensor]):
        self.cfg = cfg
        self.params = params

    def __call__(self, x) -> Tensor:
        return forward(self, x)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def astype(self, dtype) -> "UNet":
        return UNet(self.cfg, {k: Tensor(v.data.astype(dtype), requires_grad=True, name=k) for k, v in self.params.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}


def parameter_shapes(cfg: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Ordered parameter names and shapes of the network described by ``cfg``."""
    k = (3,) * cfg.dims
    shapes = {}
    c_in = cfg.in_channels
    for level in range(cfg.levels):
        w = cfg.width(level)
        shapes[f"enc{level}.conv1.weight"] = (w, c_in, *k)
        shapes[f"enc{level}.conv1.bias"] = (w,)
        shapes[f"enc{level}.conv2.weight"] = (w, w, *k)
        shapes[f"enc{level}.conv2.bias"] = (w,)
        c_in = w
    for level in reversed(range(cfg.levels - 1)):
        w = cfg.width(level)
        shapes[f"up{level}.weight"] = (cfg.width(level + 1), w, *((2,) * cfg.dims))
        shapes[f"up{level}.bias"] = (w,)
        shapes[f"dec{level}.conv1.weight"] = (w, 2 * w, *k)
        shapes[f"dec{level}.conv1.bias"] = (w,)
        shapes[f"dec{level}.conv2.weight"] = (w, w, *k)
        shapes[f"dec{level}.conv2.bias"] = (w,)
    shapes["head.weight"] = (cfg.out_channels, cfg.base_width, *((1,) * cfg.dims))
    shapes["head.bias"] = (cfg.out_channels,)
    return shapes


def build_unet(cfg: UNetConfig, seed: int = 0, dtype=np.float32) -> UNet:
    """He-normal initialised U-Net; biases start at zero."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".bias"):
            value = np.zeros(shape)
        elif name.startswith("up"):
            value = rng.normal(0.0, np.sqrt(1.0 / shape[0]), size=shape)
        elif name.startswith("head"):
            value = rng.normal(0.0, np.sqrt(1.0 / shape[1]), size=shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            value = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        params[name] = Tensor(value.astype(dtype), requires_grad=True, name=name)
    return UNet(cfg, params)


def _double_conv(h: Tensor, p: dict, prefix: str) -> Tensor:
    h = relu(conv_forward(h, p[f"{prefix}.conv1.weight"], p[f"{prefix}.conv1.bias"], padding=1))
    return relu(conv_forward(h, p[f"{prefix}.conv2.weight"], p[f"{prefix}.conv2.bias"], padding=1))


def forward(model: UNet, x) -> Tensor:
    """Per-voxel foreground probabilities for an ``(N, C, *spatial)`` batch."""
    cfg, p = model.cfg, model.params
    x = as_tensor(x, next(iter(p.values())).dtype)
    if x.data.ndim != cfg.dims + 2 or x.shape[1] != cfg.in_channels:
        raise BadShape(
            f"expected (N, {cfg.in_channels}, {'x'.join(['*'] * cfg.dims)}) input, got {x.shape}"
        )
    if any(s % cfg.divisor for s in x.shape[2:]):
        raise BadShape(f"spatial extents {x.shape[2:]} must be divisible by {cfg.divisor}")
    skips = []
    h = x
    for level in range(cfg.levels):
        h = _double_conv(h, p, f"enc{level}")
        if level < cfg.levels - 1:
            skips.append(h)
            h = maxpool(h, 2)
    for level in reversed(range(cfg.levels - 1)):
        h = upconv(h, p[f"up{level}.weight"], p[f"up{level}.bias"], stride=2)
        h = concat(h, skips[level], axis=1)
        h = _double_conv(h, p, f"dec{level}")
    return sigmoid(conv_forward(h, p["head.weight"], p["head.bias"]))
