import itertools

import pytest
import torch

from smokeseg.blocks import BlockConfig
from smokeseg.errors import GraphShapeError, ModelNameError
from smokeseg.factory import (
    GRID_NAMES,
    MidKind,
    ModelSpec,
    VariantModel,
    audit_forward,
    build_model,
    count_parameters,
    enumerate_grid,
    parse_model_name,
)


class TestParseModelName:
    def test_flagship(self):
        spec = parse_model_name("VC-TrUNet-()")
        assert spec.expand_channels
        assert spec.mid is MidKind.TRUNET
        assert not spec.channel_gate

    def test_bare_head(self):
        spec = parse_model_name("()-()-()")
        assert spec == ModelSpec(False, MidKind.NONE, False)

    def test_sequenced_transformer(self):
        spec = parse_model_name("VC-UNet+TrfB-ChA")
        assert spec.mid is MidKind.UNET_THEN_TRANSFORMER
        assert spec.channel_gate

    def test_numeric_prefix_tolerated(self):
        assert parse_model_name("9:()-()-()") == parse_model_name("()-()-()")
        assert parse_model_name("1:VC-TrUNet-()").canonical_name == "VC-TrUNet-()"

    @pytest.mark.parametrize(
        "bad",
        ["VC-Foo-ChA", "VC-TrUNet", "TrUNet", "", "VC-TrUNet-ChA-()", "vc-TrUNet-()"],
    )
    def test_rejects_off_grammar(self, bad):
        with pytest.raises(ModelNameError):
            parse_model_name(bad)

    def test_roundtrip_over_full_grammar(self):
        for expand, mid, gate in itertools.product(
            (False, True), MidKind, (False, True)
        ):
            spec = ModelSpec(expand, mid, gate)
            assert parse_model_name(spec.canonical_name) == spec


class TestGrid:
    def test_nine_variants_in_order(self):
        specs = enumerate_grid()
        assert len(specs) == 9
        assert [s.canonical_name for s in specs] == list(GRID_NAMES)

    def test_seventh_entry(self):
        assert enumerate_grid()[6].canonical_name == "VC-UNet+TrfB-()"

    def test_grid_roundtrips(self):
        for spec in enumerate_grid():
            assert parse_model_name(spec.canonical_name) == spec


class TestBuildModel:
    def test_flagship_maps_six_bands_to_three_scores(self, tiny_cfg):
        torch.manual_seed(0)
        model = build_model(parse_model_name("VC-TrUNet-()"), tiny_cfg)
        with torch.no_grad():
            out = model(torch.rand(1, 16, 16, 6))
        assert out.shape == (1, 16, 16, 3)

    def test_bare_head_contains_only_head(self, tiny_cfg):
        model = build_model(parse_model_name("()-()-()"), tiny_cfg)
        assert model.expansion is None
        assert model.mid is None
        assert model.gate is None

    def test_all_grid_variants_audit(self, tiny_cfg):
        torch.manual_seed(0)
        for spec in enumerate_grid():
            model = build_model(spec, tiny_cfg)
            audit_forward(model, tiny_cfg.input_size)

    def test_all_grid_variants_finite_on_random_batch(self, tiny_cfg):
        torch.manual_seed(1)
        x = torch.rand(2, 16, 16, 6)
        for spec in enumerate_grid():
            model = build_model(spec, tiny_cfg)
            with torch.no_grad():
                out = model(x)
            assert torch.isfinite(out).all(), spec.canonical_name
            assert ((out > 0) & (out < 1)).all(), spec.canonical_name

    def test_input_shape_validated(self, tiny_cfg):
        model = build_model(parse_model_name("()-()-()"), tiny_cfg)
        with pytest.raises(GraphShapeError):
            model(torch.rand(1, 16, 16, 5))
        with pytest.raises(GraphShapeError):
            model(torch.rand(16, 16, 6))


class TestParameterCounts:
    def test_channel_gate_strictly_adds_parameters(self, tiny_cfg):
        for expand, mid in itertools.product((False, True), MidKind):
            without = build_model(ModelSpec(expand, mid, False), tiny_cfg)
            with_gate = build_model(ModelSpec(expand, mid, True), tiny_cfg)
            assert count_parameters(with_gate) > count_parameters(without)

    def test_removing_expansion_strictly_reduces_parameters(self, tiny_cfg):
        for mid, gate in itertools.product(MidKind, (False, True)):
            with_vc = build_model(ModelSpec(True, mid, gate), tiny_cfg)
            without = build_model(ModelSpec(False, mid, gate), tiny_cfg)
            assert count_parameters(with_vc) > count_parameters(without)

    def test_sequenced_transformer_has_own_stack(self, tiny_cfg):
        unet = build_model(parse_model_name("VC-UNet-()"), tiny_cfg)
        seq = build_model(parse_model_name("VC-UNet+TrfB-()"), tiny_cfg)
        assert count_parameters(seq) > count_parameters(unet)
        assert isinstance(seq, VariantModel)
        assert seq.post_mid_transformer is not None


def test_no_dead_parameters(tiny_cfg):
    """Every trainable tensor receives a nonzero gradient on a random batch
    (checked on the variant that contains every block type)."""
    torch.manual_seed(2)
    model = build_model(parse_model_name("VC-TrUNet-ChA"), tiny_cfg)
    x = torch.rand(2, 16, 16, 6)
    target = torch.rand(2, 16, 16, 3)
    model(x).sub(target).pow(2).mean().backward()
    dead = [
        name
        for name, p in model.named_parameters()
        if p.grad is None or p.grad.abs().max() == 0
    ]
    assert not dead, dead
