import numpy as np
import pytest
import torch

from smokeseg.blocks import (
    BlockConfig,
    ChannelExpansion,
    ChannelGate,
    ConvBlock,
    PixelHead,
    RegionTransformer,
    TransformerUNet,
    predict_classes,
)
from smokeseg.errors import GraphShapeError
from smokeseg.masks import CLOUD, GAP, SMOKE


class TestBlockConfig:
    def test_defaults_valid(self):
        cfg = BlockConfig()
        assert cfg.base_channels == 64
        assert cfg.transformer_repeats == 6

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"base_channels": 7},
            {"unet_levels": 0},
            {"transformer_repeats": 0},
            {"embed_dim": 130, "attention_heads": 4},
            {"input_size": 100, "unet_levels": 4},
        ],
    )
    def test_invalid_configs(self, kwargs):
        with pytest.raises(GraphShapeError):
            BlockConfig(**kwargs)


class TestChannelExpansion:
    def test_full_scale_shape(self):
        torch.manual_seed(0)
        block = ChannelExpansion(6, 64)
        with torch.no_grad():
            out = block(torch.randn(2, 6, 256, 256))
        assert out.shape == (2, 64, 256, 256)

    def test_resolution_preserved_at_other_sizes(self):
        torch.manual_seed(0)
        block = ChannelExpansion(6, 64)
        with torch.no_grad():
            out = block(torch.randn(1, 6, 64, 64))
        assert out.shape == (1, 64, 64, 64)

    def test_zero_input_bias_map(self):
        """Zero input yields the finite, deterministic bias-propagated map;
        away from the padded borders it is spatially constant."""
        torch.manual_seed(1)
        block = ChannelExpansion(6, 16)
        with torch.no_grad():
            a = block(torch.zeros(1, 6, 12, 12))
            b = block(torch.zeros(1, 6, 12, 12))
        assert torch.equal(a, b)
        assert torch.isfinite(a).all()
        interior = a[:, :, 4:-4, 4:-4]
        assert torch.allclose(interior, interior[:, :, :1, :1].expand_as(interior))

    def test_reduced_width(self):
        block = ChannelExpansion(6, 16)
        with torch.no_grad():
            out = block(torch.randn(1, 6, 8, 8))
        assert out.shape == (1, 16, 8, 8)

    def test_bad_widths(self):
        with pytest.raises(GraphShapeError):
            ChannelExpansion(6, 15)
        with pytest.raises(GraphShapeError):
            ChannelExpansion(0, 16)


def test_conv_block_shapes():
    torch.manual_seed(0)
    block = ConvBlock(6, 32)
    with torch.no_grad():
        out = block(torch.randn(2, 6, 16, 16))
    assert out.shape == (2, 32, 16, 16)


class TestRegionTransformer:
    def test_level0_token_geometry(self):
        torch.manual_seed(0)
        cfg = BlockConfig()
        trf = RegionTransformer(64, (256, 256), cfg)
        x = torch.randn(1, 64, 256, 256)
        tokens = trf.tokenize(x)
        assert tokens.shape == (1, 1024, 128)  # (256/8)^2 tokens, dim 2*64
        with torch.no_grad():
            out = trf(x)
        assert out.shape == x.shape

    def test_constant_input_constant_output_with_zero_positions(self, tiny_cfg):
        torch.manual_seed(0)
        trf = RegionTransformer(8, (16, 16), tiny_cfg)
        with torch.no_grad():
            trf.pos_embed.zero_()
            out = trf(torch.full((1, 8, 16, 16), 0.37))
        # identical tokens + zero positions -> spatially constant output
        assert torch.allclose(out, out[:, :, :1, :1].expand_as(out), atol=1e-6)

    def test_token_permutation_with_positions_moves_outputs(self, tiny_cfg):
        """Permuting tokens together with their positional embeddings
        permutes encoder outputs correspondingly."""
        torch.manual_seed(1)
        trf = RegionTransformer(8, (16, 16), tiny_cfg).eval()
        x = torch.randn(1, 8, 16, 16)
        tokens = trf.tokenize(x)
        seq = trf.in_proj(tokens) + trf.pos_embed
        perm = torch.randperm(seq.shape[1], generator=torch.Generator().manual_seed(2))

        def run(s):
            for block in trf.encoder:
                s = block(s)
            return trf.final_norm(s)

        with torch.no_grad():
            straight = run(seq)
            permuted = run(seq[:, perm])
        assert torch.allclose(straight[:, perm], permuted, atol=1e-5)

    def test_region_permutation_equivariance_without_positions(self, tiny_cfg):
        torch.manual_seed(3)
        trf = RegionTransformer(8, (16, 16), tiny_cfg).eval()
        with torch.no_grad():
            trf.pos_embed.zero_()
        x = torch.randn(1, 8, 16, 16)
        r = tiny_cfg.region_size
        gh = 16 // r
        perm = torch.randperm(gh * gh, generator=torch.Generator().manual_seed(4))

        def permute_regions(t, p):
            b, c = t.shape[:2]
            cells = t.reshape(b, c, gh, r, gh, r).permute(0, 1, 2, 4, 3, 5)
            cells = cells.reshape(b, c, gh * gh, r, r)[:, :, p]
            cells = cells.reshape(b, c, gh, gh, r, r).permute(0, 1, 2, 4, 3, 5)
            return cells.reshape(b, c, gh * r, gh * r)

        with torch.no_grad():
            out_direct = trf(permute_regions(x, perm))
            out_permuted = permute_regions(trf(x), perm)
        assert torch.allclose(out_direct, out_permuted, atol=1e-5)

    def test_indivisible_region_rejected(self, tiny_cfg):
        with pytest.raises(GraphShapeError):
            RegionTransformer(8, (18, 18), tiny_cfg)
        trf = RegionTransformer(8, (16, 16), tiny_cfg)
        with pytest.raises(GraphShapeError):
            trf(torch.randn(1, 8, 12, 12))

    def test_grid_mismatch_rejected(self, tiny_cfg):
        trf = RegionTransformer(8, (16, 16), tiny_cfg)
        with pytest.raises(GraphShapeError):
            trf(torch.randn(1, 8, 8, 8))  # divisible but wrong grid


class TestChannelGate:
    def test_per_channel_factorization(self):
        torch.manual_seed(0)
        gate = ChannelGate(12)
        x = torch.rand(2, 12, 7, 7) + 0.5  # bounded away from zero
        with torch.no_grad():
            out = gate(x)
        ratio = out / x
        per_channel = ratio.mean(dim=(2, 3), keepdim=True)
        assert torch.allclose(ratio, per_channel.expand_as(ratio), atol=1e-6)
        assert (per_channel > 0).all() and (per_channel < 1).all()

    def test_zero_input_zero_output(self):
        gate = ChannelGate(8)
        with torch.no_grad():
            out = gate(torch.zeros(1, 8, 5, 5))
        assert torch.equal(out, torch.zeros_like(out))

    def test_shape_preserved(self):
        gate = ChannelGate(64)
        with torch.no_grad():
            out = gate(torch.randn(1, 64, 16, 16))
        assert out.shape == (1, 64, 16, 16)


class TestPixelHead:
    def test_shape_and_range(self):
        torch.manual_seed(0)
        head = PixelHead(64, 64)
        with torch.no_grad():
            out = head(torch.randn(1, 64, 16, 16))
        assert out.shape == (1, 3, 16, 16)
        assert (out > 0).all() and (out < 1).all()

    def test_per_pixel_receptive_field(self):
        torch.manual_seed(1)
        head = PixelHead(6, 16)
        a = torch.randn(1, 6, 8, 8)
        b = torch.randn(1, 6, 8, 8)
        b[0, :, 3, 4] = a[0, :, 3, 4]
        with torch.no_grad():
            out_a, out_b = head(a), head(b)
        assert torch.equal(out_a[0, :, 3, 4], out_b[0, :, 3, 4])
        assert not torch.equal(out_a, out_b)

    def test_six_channel_mode(self):
        head = PixelHead(6, 64)
        with torch.no_grad():
            out = head(torch.randn(1, 6, 32, 32))
        assert out.shape == (1, 3, 32, 32)


class TestTransformerUNet:
    def test_shape_preserved_wide(self, tiny_cfg):
        torch.manual_seed(0)
        net = TransformerUNet(8, tiny_cfg)
        with torch.no_grad():
            out = net(torch.randn(1, 8, 16, 16))
        assert out.shape == (1, 8, 16, 16)

    def test_shape_preserved_six_channel(self, tiny_cfg):
        torch.manual_seed(0)
        net = TransformerUNet(6, tiny_cfg)
        with torch.no_grad():
            out = net(torch.randn(1, 6, 16, 16))
        assert out.shape == (1, 6, 16, 16)

    def test_level_halving_doubling_trace(self):
        """Deepest encoder output follows the halve-resolution /
        double-channels rule: 4 levels and base 64 at 256 give 512
        channels on a 32x32 map."""
        torch.manual_seed(0)
        cfg = BlockConfig()  # base 64, 4 levels, input 256
        net = TransformerUNet(64, cfg)
        seen = {}
        handle = net.encoders[3].register_forward_hook(
            lambda mod, inp, out: seen.update(bottom=tuple(out.shape))
        )
        with torch.no_grad():
            net(torch.randn(1, 64, 256, 256))
        handle.remove()
        assert seen["bottom"] == (1, 512, 32, 32)

    def test_plain_unet_mode(self, tiny_cfg):
        torch.manual_seed(0)
        net = TransformerUNet(8, tiny_cfg, with_transformer=False)
        assert all(isinstance(t, torch.nn.Identity) for t in net.transformers)
        with torch.no_grad():
            out = net(torch.randn(2, 8, 16, 16))
        assert out.shape == (2, 8, 16, 16)

    def test_too_many_levels_rejected(self):
        with pytest.raises(GraphShapeError):
            BlockConfig(input_size=8, unet_levels=5)


class TestPredictClasses:
    def test_argmax_and_ties(self):
        scores = np.array([[[[0.9, 0.1, 0.2], [0.5, 0.5, 0.1]]]])
        out = predict_classes(scores)
        assert out[0, 0, 0] == SMOKE
        assert out[0, 0, 1] == SMOKE  # tie resolves to lowest channel
        assert predict_classes(np.array([[[0.1, 0.5, 0.5]]]))[0, 0] == CLOUD

    def test_matches_elementwise_oracle_and_never_gap(self):
        rng = np.random.default_rng(5)
        scores = rng.random((2, 6, 7, 3))
        out = predict_classes(scores)
        assert (out != GAP).all()
        for b in range(2):
            for r in range(6):
                for c in range(7):
                    best, best_v = 0, scores[b, r, c, 0]
                    for k in (1, 2):
                        if scores[b, r, c, k] > best_v:
                            best, best_v = k, scores[b, r, c, k]
                    assert out[b, r, c] == best + 1

    def test_wrong_channel_count(self):
        with pytest.raises(GraphShapeError):
            predict_classes(np.zeros((1, 4, 4, 2)))
