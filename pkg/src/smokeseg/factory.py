"""Variant grammar and model assembly.

Variant names follow the three-slot grammar ``<first>-<mid>-<last>``:

* first slot: ``VC`` (channel expansion present) or ``()``
* mid slot: ``TrUNet`` | ``UNet`` | ``UNet+TrfB`` | ``()``
* last slot: ``ChA`` (channel gating present) or ``()``

``()-()-()`` is the bare per-pixel head. ``UNet+TrfB`` is a plain UNet
followed by one transformer stack at full resolution (as opposed to
``TrUNet``, which runs the transformer on a parallel path inside every
level). An optional ``<digits>:`` prefix (as used in grid listings) is
accepted and ignored. Names appear verbatim in checkpoints and reports.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

import torch
from torch import nn

from .blocks import (
    IN_BANDS,
    OUT_CLASSES,
    BlockConfig,
    ChannelExpansion,
    ChannelGate,
    PixelHead,
    RegionTransformer,
    TransformerUNet,
)
from .errors import GraphShapeError, ModelNameError


class MidKind(Enum):
    TRUNET = "TrUNet"
    UNET = "UNet"
    UNET_THEN_TRANSFORMER = "UNet+TrfB"
    NONE = "()"


@dataclass(frozen=True)
class ModelSpec:
    expand_channels: bool
    mid: MidKind
    channel_gate: bool

    @property
    def canonical_name(self) -> str:
        first = "VC" if self.expand_channels else "()"
        last = "ChA" if self.channel_gate else "()"
        return f"{first}-{self.mid.value}-{last}"


_NAME_RE = re.compile(r"^(?:\d+:)?(VC|\(\))-(TrUNet|UNet\+TrfB|UNet|\(\))-(ChA|\(\))$")
_MID_TOKENS = {kind.value: kind for kind in MidKind}


def parse_model_name(name: str) -> ModelSpec:
    """Parse a variant name; raises ModelNameError on anything off-grammar."""
    match = _NAME_RE.match(name.strip())
    if not match:
        raise ModelNameError(
            f"bad model name {name!r}; expected e.g. 'VC-TrUNet-()' with mid in "
            "{TrUNet, UNet, UNet+TrfB, ()}"
        )
    first, mid, last = match.groups()
    return ModelSpec(
        expand_channels=first == "VC",
        mid=_MID_TOKENS[mid],
        channel_gate=last == "ChA",
    )


# The canonical ablation grid, in report order (ids 1..9).
GRID_NAMES = (
    "VC-TrUNet-()",
    "VC-TrUNet-ChA",
    "()-TrUNet-()",
    "VC-()-()",
    "VC-()-ChA",
    "VC-UNet-()",
    "VC-UNet+TrfB-()",
    "VC-UNet+TrfB-ChA",
    "()-()-()",
)


def enumerate_grid() -> list:
    """The 9 grid variants as ModelSpec, in report order."""
    return [parse_model_name(name) for name in GRID_NAMES]


class VariantModel(nn.Module):
    """Assembled pipeline: [expansion] -> [mid] -> [gate] -> pixel head.

    The public forward takes tiles as stored, channels last: (B, H, W, 6)
    float tensors in, (B, H, W, 3) scores in (0, 1) out.
    """

    def __init__(self, spec: ModelSpec, cfg: BlockConfig):
        super().__init__()
        self.spec = spec
        self.cfg = cfg

        channels = IN_BANDS
        self.expansion = None
        if spec.expand_channels:
            self.expansion = ChannelExpansion(channels, cfg.base_channels, cfg.activation)
            channels = cfg.base_channels

        self.mid = None
        self.post_mid_transformer = None
        if spec.mid is MidKind.TRUNET:
            self.mid = TransformerUNet(channels, cfg, with_transformer=True)
        elif spec.mid is MidKind.UNET:
            self.mid = TransformerUNet(channels, cfg, with_transformer=False)
        elif spec.mid is MidKind.UNET_THEN_TRANSFORMER:
            self.mid = TransformerUNet(channels, cfg, with_transformer=False)
            self.post_mid_transformer = RegionTransformer(
                channels, (cfg.input_size, cfg.input_size), cfg
            )
        # The UNet variants preserve their input channel count.

        self.gate = ChannelGate(channels, cfg.activation) if spec.channel_gate else None
        self.head = PixelHead(channels, cfg.base_channels, cfg.activation)
        self._audit(channels)

    def _audit(self, head_in: int):
        expected = self.cfg.base_channels if self.spec.expand_channels else IN_BANDS
        if head_in != expected:
            raise GraphShapeError(
                f"head expects {expected} channels, wiring produced {head_in}"
            )

    def features(self, x):
        """NCHW feature pipeline up to (not including) the head."""
        if self.expansion is not None:
            x = self.expansion(x)
        if self.mid is not None:
            x = self.mid(x)
        if self.post_mid_transformer is not None:
            x = self.post_mid_transformer(x)
        if self.gate is not None:
            x = self.gate(x)
        return x

    def forward(self, x):
        if x.ndim != 4 or x.shape[-1] != IN_BANDS:
            raise GraphShapeError(
                f"expected (B, H, W, {IN_BANDS}) input, got {tuple(x.shape)}"
            )
        x = x.permute(0, 3, 1, 2)
        x = self.features(x)
        return self.head(x).permute(0, 2, 3, 1)


def build_model(spec: ModelSpec, cfg: BlockConfig | None = None) -> VariantModel:
    return VariantModel(spec, cfg or BlockConfig())


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def audit_forward(model: VariantModel, size: int, batch: int = 1):
    """Run a zero tile through the model and verify the score shape."""
    with torch.no_grad():
        out = model(torch.zeros(batch, size, size, IN_BANDS))
    expected = (batch, size, size, OUT_CLASSES)
    if tuple(out.shape) != expected:
        raise GraphShapeError(f"forward produced {tuple(out.shape)}, expected {expected}")
    if not torch.isfinite(out).all():
        raise GraphShapeError("forward produced non-finite scores")
    return out
