"""Architectural building blocks with exact shape contracts.

All blocks run NCHW internally (PyTorch convention). Shape plumbing is
validated while the graph is constructed, raising GraphShapeError early
rather than at runtime; the only forward-time check is that an input's
spatial size matches the region grid a transformer was built for.

Resolution/channel contracts:

* ChannelExpansion: (B, 6, H, W) -> (B, base, H, W), resolution preserved.
* ConvBlock: resolution preserved, channels as configured.
* RegionTransformer: shape preserved; tokens are per-region channel means
  concatenated with channel maxima (token dim 2C before projection).
* TransformerUNet: shape preserved end to end; each deeper level halves
  resolution and doubles channels.
* ChannelGate: shape preserved; output is input scaled per (batch, channel).
* PixelHead: (B, c, H, W) -> (B, 3, H, W), per-pixel scores in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import GraphShapeError
from .masks import SMOKE

IN_BANDS = 6
OUT_CLASSES = 3


@dataclass(frozen=True)
class BlockConfig:
    """Widths and depths shared by every variant.

    ``input_size`` fixes the tile edge the model is built for; transformer
    positional embeddings are sized from it. ``base_channels`` is both the
    channel-expansion output width and the UNet level-0 width.
    """

    base_channels: int = 64
    unet_levels: int = 4
    transformer_repeats: int = 6
    region_size: int = 8
    attention_heads: int = 4
    embed_dim: int = 128
    activation: str = "gelu"
    input_size: int = 256

    def __post_init__(self):
        if self.base_channels < 2 or self.base_channels % 2:
            raise GraphShapeError("base_channels must be an even integer >= 2")
        if self.unet_levels < 1:
            raise GraphShapeError("unet_levels must be >= 1")
        if self.transformer_repeats < 1:
            raise GraphShapeError("transformer_repeats must be >= 1")
        if self.embed_dim % self.attention_heads:
            raise GraphShapeError("embed_dim must be divisible by attention_heads")
        if self.input_size % (1 << (self.unet_levels - 1)):
            raise GraphShapeError(
                f"input_size {self.input_size} not divisible across "
                f"{self.unet_levels} levels"
            )


_ACTIVATIONS = {"relu": nn.ReLU, "gelu": nn.GELU, "silu": nn.SiLU}


def make_activation(name: str) -> nn.Module:
    try:
        return _ACTIVATIONS[name]()
    except KeyError:
        raise GraphShapeError(f"unknown activation {name!r}") from None


class ChannelExpansion(nn.Module):
    """Expand a few input bands into a wide feature stack.

    Two sequential stages, each running 1x1, 3x3 and 5x5 same-padded
    convolutions in parallel and concatenating the results, with a
    nonlinearity between and after the stages; a final 1x1 convolution fuses
    the concatenated features down to ``out_channels``.
    """

    def __init__(self, in_channels: int, out_channels: int, activation: str = "gelu"):
        super().__init__()
        if in_channels < 1:
            raise GraphShapeError("in_channels must be positive")
        branch = out_channels // 2
        if branch < 1 or out_channels % 2:
            raise GraphShapeError("out_channels must be an even integer >= 2")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stage1 = nn.ModuleList(
            nn.Conv2d(in_channels, branch, k, padding=k // 2) for k in (1, 3, 5)
        )
        self.stage2 = nn.ModuleList(
            nn.Conv2d(3 * branch, branch, k, padding=k // 2) for k in (1, 3, 5)
        )
        self.fuse = nn.Conv2d(3 * branch, out_channels, 1)
        self.act = make_activation(activation)

    def forward(self, x):
        x = self.act(torch.cat([conv(x) for conv in self.stage1], dim=1))
        x = self.act(torch.cat([conv(x) for conv in self.stage2], dim=1))
        return self.fuse(x)


class ConvBlock(nn.Module):
    """Two 3x3 same-padded convolutions, each with per-channel norm + act."""

    def __init__(self, in_channels: int, out_channels: int, activation: str = "gelu"):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, padding=1),
            nn.GroupNorm(out_channels, out_channels),
            make_activation(activation),
            nn.Conv2d(out_channels, out_channels, 3, padding=1),
            nn.GroupNorm(out_channels, out_channels),
            make_activation(activation),
        )

    def forward(self, x):
        return self.block(x)


class EncoderBlock(nn.Module):
    """Pre-norm self-attention encoder: MHA and feed-forward, residual each."""

    def __init__(self, embed_dim: int, heads: int, activation: str = "gelu"):
        super().__init__()
        self.norm1 = nn.LayerNorm(embed_dim)
        self.attn = nn.MultiheadAttention(embed_dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(embed_dim)
        self.ff = nn.Sequential(
            nn.Linear(embed_dim, 4 * embed_dim),
            make_activation(activation),
            nn.Linear(4 * embed_dim, embed_dim),
        )

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.ff(self.norm2(x))


class RegionTransformer(nn.Module):
    """Self-attention over region tokens, broadcast back to the feature map.

    The map is cut into non-overlapping region_size x region_size cells; each
    contributes one token of its per-channel means concatenated with its
    per-channel maxima. Tokens are projected to ``embed_dim``, offset by a
    learned positional embedding, passed through the stacked encoder blocks,
    projected back to the channel count, and each token's vector is broadcast
    uniformly over its region. Output shape equals input shape.
    """

    def __init__(self, channels: int, map_size: tuple, cfg: BlockConfig):
        super().__init__()
        height, width = map_size
        r = cfg.region_size
        if height % r or width % r:
            raise GraphShapeError(
                f"region size {r} does not divide map {height}x{width}"
            )
        self.channels = channels
        self.region_size = r
        self.grid = (height // r, width // r)
        tokens = self.grid[0] * self.grid[1]
        self.in_proj = nn.Linear(2 * channels, cfg.embed_dim)
        self.pos_embed = nn.Parameter(torch.randn(1, tokens, cfg.embed_dim) * 0.02)
        self.encoder = nn.ModuleList(
            EncoderBlock(cfg.embed_dim, cfg.attention_heads, cfg.activation)
            for _ in range(cfg.transformer_repeats)
        )
        self.final_norm = nn.LayerNorm(cfg.embed_dim)
        self.out_proj = nn.Linear(cfg.embed_dim, channels)

    def tokenize(self, x):
        """(B, C, H, W) -> (B, T, 2C) region mean/max tokens."""
        b, c, h, w = x.shape
        r = self.region_size
        if h % r or w % r:
            raise GraphShapeError(f"region size {r} does not divide input {h}x{w}")
        gh, gw = h // r, w // r
        if (gh, gw) != self.grid:
            raise GraphShapeError(
                f"input grid {gh}x{gw} does not match built grid "
                f"{self.grid[0]}x{self.grid[1]}"
            )
        cells = x.reshape(b, c, gh, r, gw, r).permute(0, 2, 4, 1, 3, 5)
        cells = cells.reshape(b, gh * gw, c, r * r)
        return torch.cat([cells.mean(dim=-1), cells.amax(dim=-1)], dim=-1)

    def encode(self, tokens):
        """Positional embedding plus the encoder stack, in token space."""
        seq = self.in_proj(tokens) + self.pos_embed
        for block in self.encoder:
            seq = block(seq)
        return self.final_norm(seq)

    def forward(self, x):
        b, c, h, w = x.shape
        tokens = self.tokenize(x)
        seq = self.encode(tokens)
        out = self.out_proj(seq)
        gh, gw = self.grid
        out = out.reshape(b, gh, gw, c).permute(0, 3, 1, 2)
        out = out.repeat_interleave(self.region_size, dim=2)
        return out.repeat_interleave(self.region_size, dim=3)


class ChannelGate(nn.Module):
    """Rescale each channel by a factor in (0, 1) from its spatial average."""

    def __init__(self, channels: int, activation: str = "gelu"):
        super().__init__()
        hidden = max(channels // 4, 4)
        self.fc = nn.Sequential(
            nn.Linear(channels, hidden),
            make_activation(activation),
            nn.Linear(hidden, channels),
            nn.Sigmoid(),
        )

    def forward(self, x):
        gate = self.fc(x.mean(dim=(2, 3)))
        return x * gate[:, :, None, None]


class PixelHead(nn.Module):
    """Two per-pixel affine layers ending in sigmoid class scores."""

    def __init__(self, in_channels: int, hidden: int, activation: str = "gelu"):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 1),
            make_activation(activation),
            nn.Conv2d(hidden, OUT_CLASSES, 1),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return self.block(x)


class TransformerUNet(nn.Module):
    """Encoder-decoder with an optional transformer path at every level.

    Encoding: per level a ConvBlock, then 2x2 max-pool halves resolution and
    the next ConvBlock doubles channels. Decoding: transposed-convolution
    upsampling, concatenated with that level's transformer output (when
    enabled) and its identity skip, through the level's right ConvBlock. The
    bottom level mirrors the same wiring minus the from-below input. Output
    shape equals input shape, including channels.

    With ``with_transformer=False`` the transformer path is dropped and the
    identity skip remains, giving the classic UNet wiring.
    """

    def __init__(self, in_channels: int, cfg: BlockConfig, with_transformer: bool = True):
        super().__init__()
        levels = cfg.unet_levels
        widths = [cfg.base_channels << lvl for lvl in range(levels)]
        sizes = [cfg.input_size >> lvl for lvl in range(levels)]
        if min(sizes) < 1:
            raise GraphShapeError(
                f"input_size {cfg.input_size} too small for {levels} levels"
            )
        self.in_channels = in_channels
        self.with_transformer = with_transformer

        self.encoders = nn.ModuleList(
            ConvBlock(in_channels if lvl == 0 else widths[lvl - 1], widths[lvl], cfg.activation)
            for lvl in range(levels)
        )
        self.transformers = nn.ModuleList(
            RegionTransformer(widths[lvl], (sizes[lvl], sizes[lvl]), cfg)
            if with_transformer
            else nn.Identity()
            for lvl in range(levels)
        )
        self.pool = nn.MaxPool2d(2)
        self.upsamplers = nn.ModuleList(
            nn.ConvTranspose2d(widths[lvl], widths[lvl - 1], 2, stride=2)
            for lvl in range(1, levels)
        )
        skip_paths = 2 if with_transformer else 1
        self.decoders = nn.ModuleList()
        for lvl in range(levels):
            from_below = 0 if lvl == levels - 1 else widths[lvl]
            in_ch = skip_paths * widths[lvl] + from_below
            out_ch = in_channels if lvl == 0 else widths[lvl]
            self.decoders.append(ConvBlock(in_ch, out_ch, cfg.activation))

    def _skips(self, lvl, feat):
        if self.with_transformer:
            return [self.transformers[lvl](feat), feat]
        return [feat]

    def forward(self, x):
        feats = []
        for lvl, encoder in enumerate(self.encoders):
            x = encoder(x)
            feats.append(x)
            if lvl < len(self.encoders) - 1:
                x = self.pool(x)

        bottom = len(feats) - 1
        y = self.decoders[bottom](torch.cat(self._skips(bottom, feats[bottom]), dim=1))
        for lvl in range(bottom - 1, -1, -1):
            y = self.upsamplers[lvl](y)
            y = self.decoders[lvl](torch.cat([y] + self._skips(lvl, feats[lvl]), dim=1))
        return y


def predict_classes(scores) -> np.ndarray:
    """Per-pixel argmax of (..., H, W, 3) scores into class codes.

    Ties resolve to the lowest channel index. Channel order is Smoke, Cloud,
    Clear, mapping to codes 1, 2, 3; the result never contains Gap.
    """
    scores = np.asarray(scores)
    if scores.shape[-1] != OUT_CLASSES:
        raise GraphShapeError(f"expected {OUT_CLASSES} score channels, got {scores.shape[-1]}")
    return (np.argmax(scores, axis=-1) + SMOKE).astype(np.uint8)
