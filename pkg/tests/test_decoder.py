import math

import pytest
import torch

from denseevents.decoder import (
    DecoderState,
    RelationDecoder,
    RelationMaskEncoder,
    RelationSelfAttention,
    StaticAnchorProjection,
)
from denseevents.encoder import MultiScaleFeatures
from denseevents.errors import ShapeMismatchError
from denseevents.queries import EventQuerySet


def make_queries(n=4, dim=8, seed=0):
    torch.manual_seed(seed)
    anchors = torch.rand(n, 2) * 0.6 + 0.2
    logits = torch.log(anchors) - torch.log1p(-anchors)
    return EventQuerySet(
        embeddings=torch.randn(n, dim),
        anchors=anchors,
        anchor_logits=logits,
        static_anchors=anchors.clone(),
        centroids=anchors.clone(),
    )


def make_video(dim=8, seed=0):
    torch.manual_seed(seed + 100)
    return MultiScaleFeatures([torch.randn(16, dim), torch.randn(8, dim)])


def make_decoder(dim=8, layers=2, heads=2, seed=0, **kw):
    torch.manual_seed(seed + 200)
    return RelationDecoder(
        dim, num_layers=layers, heads=heads, num_scales=2, points=2,
        relation_embed_dim=4, **kw
    )


class TestRelationMaskEncoder:
    def test_shape_and_nonnegativity(self):
        torch.manual_seed(0)
        enc = RelationMaskEncoder(heads=4, embed_dim=8)
        rel = torch.randn(5, 5, 2)
        mask = enc(rel)
        assert mask.shape == (5, 5, 4)
        assert (mask >= 0).all()

    def test_zeroed_projection_gives_zero_mask(self):
        torch.manual_seed(1)
        enc = RelationMaskEncoder(heads=4, embed_dim=8)
        with torch.no_grad():
            enc.proj.weight.zero_()
            enc.proj.bias.zero_()
            enc.norm.weight.zero_()
            enc.norm.bias.zero_()
        assert (enc(torch.randn(6, 6, 2)) == 0).all()

    def test_rejects_bad_trailing_dim(self):
        enc = RelationMaskEncoder(heads=2, embed_dim=4)
        with pytest.raises(ShapeMismatchError):
            enc(torch.randn(3, 3, 3))


class TestRelationSelfAttention:
    def test_uniform_attention_oracle(self):
        """Zero Q/K weights make logits constant, so attention averages the
        value rows uniformly; with identity V/out this is the row mean."""
        attn = RelationSelfAttention(dim=4, heads=1)
        with torch.no_grad():
            attn.w_q.weight.zero_()
            attn.w_q.bias.zero_()
            attn.w_k.weight.zero_()
            attn.w_k.bias.zero_()
            attn.w_v.weight.copy_(torch.eye(4))
            attn.w_v.bias.zero_()
            attn.out_proj.weight.copy_(torch.eye(4))
            attn.out_proj.bias.zero_()
        x = torch.randn(5, 4)
        out = attn(x, torch.zeros(5, 4))
        expected = x.mean(dim=0, keepdim=True).expand(5, 4) + x  # residual
        assert torch.allclose(out, expected, atol=1e-6)

    def test_strong_bias_row_selects_one_key(self):
        """A very large relation bias toward one column concentrates that
        row's attention on the corresponding value."""
        torch.manual_seed(2)
        attn = RelationSelfAttention(dim=4, heads=1)
        x = torch.randn(4, 4)
        mask = torch.zeros(4, 4, 1)
        mask[0, 2, 0] = 1e4
        _, a = attn(x, torch.zeros(4, 4), mask, return_attention=True)
        assert a[0, 0, 2].item() > 0.999

    def test_attention_rows_sum_to_one(self):
        torch.manual_seed(3)
        attn = RelationSelfAttention(dim=8, heads=2)
        x = torch.randn(6, 8)
        _, a = attn(x, torch.randn(6, 8), torch.rand(6, 6, 2), return_attention=True)
        assert torch.allclose(a.sum(dim=-1), torch.ones(2, 6), atol=1e-6)

    def test_shape_errors(self):
        attn = RelationSelfAttention(dim=4, heads=2)
        x = torch.randn(3, 4)
        with pytest.raises(ShapeMismatchError):
            attn(x, torch.randn(4, 4))
        with pytest.raises(ShapeMismatchError):
            attn(x, x, relation_mask=torch.zeros(3, 3, 1))
        with pytest.raises(ShapeMismatchError):
            RelationSelfAttention(dim=6, heads=4)


class TestRelationDecoder:
    def test_static_anchors_never_change(self):
        dec = make_decoder(layers=3)
        q = make_queries()
        states = dec(q, make_video())
        for st in states:
            assert torch.equal(st.static_anchors, q.static_anchors)

    def test_layer_indices_and_count(self):
        dec = make_decoder(layers=3)
        states = dec(make_queries(), make_video())
        assert [st.layer_index for st in states] == [1, 2, 3]

    def test_zero_refinement_keeps_anchors(self):
        # offset MLPs are zero-initialized, so anchors pass through untouched
        dec = make_decoder(layers=2)
        q = make_queries()
        states = dec(q, make_video())
        for st in states:
            assert torch.allclose(st.anchors, q.anchors, atol=1e-6)

    def test_anchors_move_with_nonzero_refinement(self):
        dec = make_decoder(layers=2, seed=1)
        with torch.no_grad():
            for layer in dec.layers:
                layer.offset_mlp[-1].weight.normal_(0.0, 0.5)
        q = make_queries(seed=1)
        states = dec(q, make_video(seed=1))
        assert (states[-1].anchors - q.anchors).abs().max() > 1e-4
        assert (states[-1].anchors > 0).all() and (states[-1].anchors < 1).all()

    def test_output_depends_on_video(self):
        dec = make_decoder(seed=2)
        q = make_queries(seed=2)
        a = dec(q, make_video(seed=2))[-1].embeddings
        b = dec(q, make_video(seed=3))[-1].embeddings
        assert (a - b).abs().max() > 1e-6

    def test_zeroed_relation_encoder_matches_no_relation_baseline(self):
        """With the relation projection weights zeroed, the relation-enabled
        decoder reproduces the relation-free decoder to within 1e-6."""
        for seed in range(5):
            dec_on = make_decoder(seed=seed, use_relation=True)
            dec_off = make_decoder(seed=seed, use_relation=False)
            # align every shared weight, then zero the relation projection
            shared = {k: v for k, v in dec_on.state_dict().items()
                      if not k.startswith("relation_encoder")}
            dec_off.load_state_dict(shared)
            with torch.no_grad():
                dec_on.relation_encoder.proj.weight.zero_()
                dec_on.relation_encoder.proj.bias.zero_()
                dec_on.relation_encoder.norm.weight.zero_()
                dec_on.relation_encoder.norm.bias.zero_()
            q = make_queries(seed=seed)
            video = make_video(seed=seed)
            a = dec_on(q, video)[-1]
            b = dec_off(q, video)[-1]
            assert (a.embeddings - b.embeddings).abs().max().item() <= 1e-6
            assert (a.anchors - b.anchors).abs().max().item() <= 1e-6

    def test_center_metric_changes_mask(self):
        dec_o = make_decoder(seed=4, relation_metric="overlap")
        dec_c = make_decoder(seed=4, relation_metric="center")
        dec_c.load_state_dict(dec_o.state_dict())
        q = make_queries(seed=4)
        video = make_video(seed=4)
        m_o = dec_o(q, video)[0].relation_mask
        m_c = dec_c(q, video)[0].relation_mask
        assert (m_o - m_c).abs().max() > 1e-6

    def test_unknown_metric_rejected(self):
        with pytest.raises(ValueError):
            make_decoder(relation_metric="cosine")
        with pytest.raises(ValueError):
            make_decoder(layers=0)

    def test_attention_map_recorded(self):
        dec = make_decoder(layers=1, heads=2)
        st = dec(make_queries(), make_video())[0]
        assert st.attention_map.shape == (2, 4, 4)
        assert st.relation_mask.shape == (4, 4, 2)


class TestStaticAnchorProjection:
    def test_shape_and_anchor_sensitivity(self):
        torch.manual_seed(5)
        proj = StaticAnchorProjection(8)
        a = proj(torch.tensor([[0.3, 0.2]]))
        b = proj(torch.tensor([[0.7, 0.2]]))
        assert a.shape == (1, 8)
        assert (a - b).abs().max() > 1e-6
