"""Relation-enhanced decoding.

Each layer rebuilds an N x N x heads additive attention bias from the current
event anchors (pairwise overlap-aware relations, sinusoidally embedded and
projected per head), runs self-attention with static-anchor-augmented queries
and keys, cross-attends into the encoded video pyramid with anchor-centered
deformable sampling, and refines the anchors in inverse-sigmoid space. The
static anchors are never updated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .encoder import DeformableAttention1d, MultiScaleFeatures
from .errors import ShapeMismatchError
from .geometry import pairwise_center_relation_matrix, pairwise_relation_matrix
from .ops import encode_coordinates, inverse_sigmoid, mlp, sinusoidal_encoding
from .queries import EventQuerySet


@dataclass
class DecoderState:
    layer_index: int
    embeddings: torch.Tensor  # N x D
    anchors: torch.Tensor  # N x 2 in (0, 1)
    anchor_logits: torch.Tensor  # N x 2
    static_anchors: torch.Tensor  # N x 2, constant across layers
    relation_mask: torch.Tensor | None = None  # N x N x M (debug)
    attention_map: torch.Tensor | None = None  # M x N x N (debug)


class RelationMaskEncoder(nn.Module):
    """Pointwise encoding of pairwise relation vectors into per-head biases.

    Each of the 2 relation channels is sinusoidally embedded, the embeddings
    are concatenated and mapped 1x1 to the head count, then layer-normalized
    and ReLU-clamped. Zeroing the projection weights yields an exactly zero
    mask, which reduces the decoder to its no-relation baseline.
    """

    def __init__(self, heads: int, embed_dim: int = 16):
        super().__init__()
        self.heads = heads
        self.embed_dim = embed_dim
        self.proj = nn.Linear(2 * embed_dim, heads)
        self.norm = nn.LayerNorm(heads)

    def forward(self, relations: torch.Tensor) -> torch.Tensor:
        if relations.shape[-1] != 2:
            raise ShapeMismatchError(f"expected trailing relation dim 2, got {tuple(relations.shape)}")
        emb = torch.cat(
            [sinusoidal_encoding(relations[..., i], self.embed_dim) for i in range(2)],
            dim=-1,
        ).to(relations.dtype)
        return torch.relu(self.norm(self.proj(emb)))


class StaticAnchorProjection(nn.Module):
    """Sinusoidal encoding of (c, d) anchors followed by an MLP to D dims."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.mlp = mlp([dim, dim, dim])

    def forward(self, anchors: torch.Tensor) -> torch.Tensor:
        return self.mlp(encode_coordinates(anchors, self.dim).to(anchors.dtype))


class RelationSelfAttention(nn.Module):
    """Multi-head self-attention with anchor-added Q/K and an additive
    per-head relation bias on the pre-softmax logits."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ShapeMismatchError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.w_q = nn.Linear(dim, dim)
        self.w_k = nn.Linear(dim, dim)
        self.w_v = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(
        self,
        embeddings: torch.Tensor,
        anchor_embed: torch.Tensor,
        relation_mask: torch.Tensor | None = None,
        return_attention: bool = False,
    ):
        n = embeddings.shape[0]
        if anchor_embed.shape != embeddings.shape:
            raise ShapeMismatchError(
                f"anchor embed {tuple(anchor_embed.shape)} vs embeddings {tuple(embeddings.shape)}"
            )
        qk_input = embeddings + anchor_embed
        q = self.w_q(qk_input).view(n, self.heads, self.head_dim).transpose(0, 1)
        k = self.w_k(qk_input).view(n, self.heads, self.head_dim).transpose(0, 1)
        v = self.w_v(embeddings).view(n, self.heads, self.head_dim).transpose(0, 1)
        logits = q @ k.transpose(1, 2) / self.head_dim**0.5  # M x N x N
        if relation_mask is not None:
            if relation_mask.shape != (n, n, self.heads):
                raise ShapeMismatchError(
                    f"relation mask {tuple(relation_mask.shape)} vs N={n}, M={self.heads}"
                )
            logits = logits + relation_mask.permute(2, 0, 1)
        attn = torch.softmax(logits, dim=-1)
        out = (attn @ v).transpose(0, 1).reshape(n, self.dim)
        out = self.out_proj(out) + embeddings
        if return_attention:
            return out, attn
        return out


class DecoderLayer(nn.Module):
    # output gain on the zero-initialized refinement projection: widens the
    # anchor range reachable within a small, fixed learning-rate budget
    offset_gain: float = 8.0

    def __init__(
        self,
        dim: int,
        heads: int,
        num_scales: int,
        points: int,
        ffn_dim: int,
    ):
        super().__init__()
        self.self_attn = RelationSelfAttention(dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.cross_attn = DeformableAttention1d(dim, heads, num_scales, points)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, ffn_dim), nn.ReLU(), nn.Linear(ffn_dim, dim))
        self.norm3 = nn.LayerNorm(dim)
        self.offset_mlp = mlp([dim, dim, 2])
        nn.init.zeros_(self.offset_mlp[-1].weight)
        nn.init.zeros_(self.offset_mlp[-1].bias)

    def forward(
        self,
        state: DecoderState,
        video: MultiScaleFeatures,
        anchor_embed: torch.Tensor,
        relation_mask: torch.Tensor | None,
    ) -> DecoderState:
        x, attn = self.self_attn(
            state.embeddings, anchor_embed, relation_mask, return_attention=True
        )
        x = self.norm1(x)
        centers = state.anchors[:, 0]
        widths = state.anchors[:, 1]
        cross = self.cross_attn(x + anchor_embed, video, centers, ref_widths=widths)
        x = self.norm2(x + cross)
        x = self.norm3(x + self.ffn(x))
        logits = state.anchor_logits + self.offset_gain * self.offset_mlp(x)
        return DecoderState(
            layer_index=state.layer_index + 1,
            embeddings=x,
            anchors=torch.sigmoid(logits),
            anchor_logits=logits,
            static_anchors=state.static_anchors,
            relation_mask=relation_mask,
            attention_map=attn,
        )


class RelationDecoder(nn.Module):
    """Stack of decoder layers with per-layer relation mask recomputation."""

    def __init__(
        self,
        dim: int,
        num_layers: int = 2,
        heads: int = 8,
        num_scales: int = 4,
        points: int = 4,
        ffn_dim: int | None = None,
        relation_embed_dim: int = 16,
        use_relation: bool = True,
        relation_metric: str = "overlap",
    ):
        super().__init__()
        if num_layers < 1:
            raise ValueError("decoder needs at least one layer")
        self.use_relation = use_relation
        if relation_metric == "overlap":
            self.relation_matrix = pairwise_relation_matrix
        elif relation_metric == "center":
            self.relation_matrix = pairwise_center_relation_matrix
        else:
            raise ValueError(f"unknown relation metric {relation_metric}")
        self.anchor_proj = StaticAnchorProjection(dim)
        self.relation_encoder = RelationMaskEncoder(heads, relation_embed_dim) if use_relation else None
        ffn_dim = ffn_dim or 2 * dim
        self.layers = nn.ModuleList(
            DecoderLayer(dim, heads, num_scales, points, ffn_dim) for _ in range(num_layers)
        )

    def forward(self, queries: EventQuerySet, video: MultiScaleFeatures) -> list[DecoderState]:
        """Run all layers; returns every intermediate state for deep supervision."""
        anchor_embed = self.anchor_proj(queries.static_anchors)
        state = DecoderState(
            layer_index=0,
            embeddings=queries.embeddings,
            anchors=queries.anchors,
            anchor_logits=queries.anchor_logits,
            static_anchors=queries.static_anchors,
        )
        states: list[DecoderState] = []
        for layer in self.layers:
            mask = None
            if self.relation_encoder is not None:
                mask = self.relation_encoder(self.relation_matrix(state.anchors))
            state = layer(state, video, anchor_embed, mask)
            states.append(state)
        return states
