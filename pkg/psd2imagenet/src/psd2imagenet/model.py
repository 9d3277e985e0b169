"""Contour reconstruction network.

A residual convolution encoder squeezes the reshaped power tensor into a
small token grid, a multi-head external-attention block mixes the tokens
against a learned memory shared across the dataset, and a residual
transposed-convolution decoder grows the tokens back into an image that
is bilinearly resized to the target frame and clamped into [0, 1].

Two scale profiles exist: "full" for 8192-bin captures emitting 1080 x 980
images, and "desk" for the 128-bin bench scale emitting 96 x 80 images.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

_PROFILES = ("desk", "full")

# Encoder stages as (mid, out, tail kernel, stride, padding). The strided
# convolutions use no padding, so each stage maps n -> (n - 3)//s + 1.
_FULL_DOWN = (
    (4, 8, 1, (2, 2), (0, 0)),
    (16, 32, 1, (2, 2), (0, 0)),
    (64, 128, 3, (2, 2), (0, 0)),
    (256, 512, 3, (2, 2), (0, 0)),
    (1024, 1024, 3, (2, 2), (0, 0)),
    (2048, 2048, 3, (2, 2), (0, 0)),
)
# Decoder stages as (mid, out, stride, output padding). Transposed kernels
# are 3 with no padding, so each stage maps n -> (n - 1)*s + 3 + extra.
# The first stage climbs rows faster than columns to land on 23 x 31.
_FULL_UP = (
    (1024, 1024, (3, 2), (2, 0)),
    (512, 512, (2, 2), (0, 0)),
    (256, 128, (2, 2), (0, 0)),
    (64, 32, (2, 2), (0, 0)),
    (16, 8, (2, 2), (0, 0)),
    (4, 1, (2, 2), (0, 0)),
)
_FULL_TOKEN_DIM = 64

# Bench-scale variant: the bin axis starts at 16 after the reshape, so the
# later stages stride only along patterns and pad the narrow bin axis.
_DESK_DOWN = (
    (4, 8, 1, (2, 2), (0, 0)),
    (16, 32, 1, (2, 2), (0, 0)),
    (32, 64, 3, (2, 1), (0, 1)),
    (64, 128, 3, (2, 1), (0, 1)),
)
_DESK_UP = (
    (64, 64, (2, 2), (0, 0)),
    (32, 16, (2, 2), (0, 0)),
    (4, 1, (2, 2), (0, 0)),
)
_DESK_TOKEN_DIM = 32


@dataclass(frozen=True)
class NetworkConfig:
    """Scale description of the reconstruction network.

    input_shape is the raw power tensor (channels, patterns, bins); the
    bins axis is fanned out along the patterns axis before the first
    convolution (see reshape_input). memory_dim is the number of rows of
    the shared external-attention memory.
    """

    input_shape: tuple = (2, 70, 8192)
    output_shape: tuple = (1080, 980)
    heads: int = 16
    dropout: float = 0.3
    memory_dim: int = 64
    scale_profile: str = "full"

    def __post_init__(self):
        if self.scale_profile not in _PROFILES:
            raise ValueError(f"unknown scale profile {self.scale_profile!r}")
        if len(self.input_shape) != 3:
            raise ValueError("input_shape must be (channels, patterns, bins)")
        if self.input_shape[-1] % 8:
            raise ValueError("bins must be divisible by 8")
        if len(self.output_shape) != 2:
            raise ValueError("output_shape must be (height, width)")
        if self.heads < 1:
            raise ValueError("need at least one attention head")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.memory_dim < 1:
            raise ValueError("memory_dim must be positive")

    @property
    def reshaped_shape(self) -> tuple:
        c, p, f = self.input_shape
        return (c, p * 8, f // 8)

    @classmethod
    def full(cls, **overrides) -> "NetworkConfig":
        return cls(**{"scale_profile": "full", **overrides})

    @classmethod
    def desk(cls, **overrides) -> "NetworkConfig":
        base = {"input_shape": (2, 70, 128), "output_shape": (96, 80),
                "scale_profile": "desk"}
        return cls(**{**base, **overrides})

    @classmethod
    def named(cls, profile: str, **overrides) -> "NetworkConfig":
        if profile not in _PROFILES:
            raise ValueError(f"unknown scale profile {profile!r}")
        return cls.desk(**overrides) if profile == "desk" \
            else cls.full(**overrides)


def reshape_input(psd: torch.Tensor) -> torch.Tensor:
    """Fan consecutive groups of eight bins out along the pattern axis.

    out[..., 8p + j, q] = in[..., p, 8q + j]; bijective when the bin count
    is divisible by 8, turning (c, P, F) into (c, 8P, F/8).
    """
    bins = psd.shape[-1]
    if bins % 8:
        raise ValueError(f"bin axis {bins} not divisible by 8")
    lead = psd.shape[:-2]
    patterns = psd.shape[-2]
    x = psd.reshape(*lead, patterns, bins // 8, 8)
    return x.transpose(-2, -1).reshape(*lead, patterns * 8, bins // 8)


class ExternalAttention(nn.Module):
    """Attention of tokens against a learned input-independent memory.

    Queries come from a two-layer perceptron on the tokens (hidden width =
    token width); the row-softmaxed scores against the memory weigh a
    combination of memory rows, so the output keeps the token shape. With
    no positional term, permuting tokens permutes outputs identically.
    """

    def __init__(self, dim: int, memory_size: int, dropout: float = 0.0,
                 memory: nn.Parameter | None = None):
        super().__init__()
        self.dim = dim
        self.query = nn.Sequential(nn.Linear(dim, dim), nn.ReLU(inplace=True),
                                   nn.Linear(dim, dim))
        if memory is None:
            memory = nn.Parameter(torch.empty(memory_size, dim))
            # unit-order score temperature at init, so attention starts
            # informative and gradients reach the encoder
            nn.init.normal_(memory, std=dim**-0.5)
        if memory.shape != (memory_size, dim):
            raise ValueError("memory shape does not match (memory_size, dim)")
        self.memory = memory
        self.drop = nn.Dropout(dropout)

    def attention(self, tokens: torch.Tensor) -> torch.Tensor:
        """Row-stochastic attention map of shape (..., tokens, memory)."""
        if tokens.shape[-1] != self.dim:
            raise ValueError(
                f"token width {tokens.shape[-1]} does not match {self.dim}")
        scores = self.query(tokens) @ self.memory.transpose(0, 1)
        return torch.softmax(scores, dim=-1)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.drop(self.attention(tokens)) @ self.memory


class MEALayer(nn.Module):
    """Multi-head external attention over one memory shared by all heads.

    Each head queries the common memory through its own perceptron; the
    concatenated head outputs are mixed back to the token width, so token
    count and feature dimension are unchanged.
    """

    def __init__(self, dim: int, heads: int, memory_size: int,
                 dropout: float = 0.0):
        super().__init__()
        if heads < 1:
            raise ValueError("need at least one attention head")
        self.memory = nn.Parameter(torch.empty(memory_size, dim))
        nn.init.normal_(self.memory, std=dim**-0.5)
        self.heads = nn.ModuleList(
            ExternalAttention(dim, memory_size, dropout, memory=self.memory)
            for _ in range(heads))
        self.mix = nn.Sequential(nn.Linear(dim * heads, dim),
                                 nn.ReLU(inplace=True), nn.Linear(dim, dim))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.mix(torch.cat([head(tokens) for head in self.heads],
                                  dim=-1))


class ResConvDown(nn.Module):
    """Downsampling residual block.

    Main path: strided no-padding 3x3 convolution to the mid width, then a
    stride-1 same-padding convolution to the out width. The skip is a
    strided 3x3 projection, so both paths land on the same grid.
    """

    def __init__(self, in_ch: int, mid_ch: int, out_ch: int,
                 tail_kernel: int = 3, stride=(2, 2), padding=(0, 0)):
        super().__init__()
        self.reduce = nn.Conv2d(in_ch, mid_ch, 3, stride=stride,
                                padding=padding)
        self.norm1 = nn.BatchNorm2d(mid_ch)
        self.widen = nn.Conv2d(mid_ch, out_ch, tail_kernel,
                               padding=tail_kernel // 2)
        self.norm2 = nn.BatchNorm2d(out_ch)
        self.skip = nn.Conv2d(in_ch, out_ch, 3, stride=stride,
                              padding=padding)
        self.norm_skip = nn.BatchNorm2d(out_ch)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        main = self.norm2(self.widen(torch.relu(self.norm1(self.reduce(x)))))
        return torch.relu(main + self.norm_skip(self.skip(x)))


class ResConvUp(nn.Module):
    """Upsampling residual block with transposed 3x3 convolutions.

    Both the main and the skip transposed convolutions use no padding and
    the same stride, mapping n -> (n - 1)*s + 3 (+ output padding); a
    stride-1 convolution refines the grown grid.
    """

    def __init__(self, in_ch: int, mid_ch: int, out_ch: int,
                 stride=(2, 2), output_padding=(0, 0), activate: bool = True):
        super().__init__()
        self.grow = nn.ConvTranspose2d(in_ch, mid_ch, 3, stride=stride,
                                       output_padding=output_padding)
        self.norm1 = nn.BatchNorm2d(mid_ch)
        self.refine = nn.Conv2d(mid_ch, out_ch, 3, padding=1)
        self.norm2 = nn.BatchNorm2d(out_ch)
        self.skip = nn.ConvTranspose2d(in_ch, out_ch, 3, stride=stride,
                                       output_padding=output_padding)
        self.norm_skip = nn.BatchNorm2d(out_ch)
        self.activate = activate

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        main = self.norm2(self.refine(torch.relu(self.norm1(self.grow(x)))))
        out = main + self.norm_skip(self.skip(x))
        return torch.relu(out) if self.activate else out


def _profile_stages(profile: str):
    if profile == "full":
        return _FULL_DOWN, _FULL_TOKEN_DIM, _FULL_UP
    return _DESK_DOWN, _DESK_TOKEN_DIM, _DESK_UP


class Psd2ImageNet(nn.Module):
    """Encoder, attention bottleneck, decoder; emits images in [0, 1]."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        downs, token_dim, ups = _profile_stages(config.scale_profile)
        ch = config.input_shape[0]
        stages = []
        for mid, out, kernel, stride, padding in downs:
            stages.append(ResConvDown(ch, mid, out, kernel, stride, padding))
            ch = out
        self.encoder = nn.Sequential(*stages)
        self.squeeze = nn.Conv2d(ch, token_dim, 1)
        self.attention = MEALayer(token_dim, config.heads, config.memory_dim,
                                  config.dropout)
        self.expand = nn.Conv2d(token_dim, ch, 1)
        stages = []
        for k, (mid, out, stride, output_padding) in enumerate(ups):
            # the last stage feeds the clamp directly, so it stays linear
            stages.append(ResConvUp(ch, mid, out, stride, output_padding,
                                    activate=k < len(ups) - 1))
            ch = out
        self.decoder = nn.Sequential(*stages)

    def forward(self, psd: torch.Tensor) -> torch.Tensor:
        unbatched = psd.dim() == 3
        if unbatched:
            psd = psd.unsqueeze(0)
        if psd.dim() != 4 or tuple(psd.shape[1:]) != self.config.input_shape:
            raise ValueError(f"expected a {self.config.input_shape} power "
                             f"tensor, got {tuple(psd.shape)}")
        x = self.encoder(reshape_input(psd))
        n, _, h, w = x.shape
        tokens = self.squeeze(x).flatten(2).transpose(1, 2)
        # residual around the attention block keeps an unattenuated
        # gradient path into the encoder
        tokens = tokens + self.attention(tokens)
        x = self.expand(tokens.transpose(1, 2).reshape(n, -1, h, w))
        x = self.decoder(x)
        x = F.interpolate(x, size=self.config.output_shape, mode="bilinear",
                          align_corners=False)
        out = x.clamp(0.0, 1.0).squeeze(1)
        return out[0] if unbatched else out
