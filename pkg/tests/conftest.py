import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from smokeseg.blocks import BlockConfig


@pytest.fixture
def tiny_cfg():
    """Smallest config that still exercises every block."""
    return BlockConfig(
        base_channels=8,
        unet_levels=2,
        transformer_repeats=1,
        region_size=4,
        attention_heads=2,
        embed_dim=16,
        input_size=16,
    )
