"""Frame-feature encoding: temporal rescaling, a multi-scale downsampling
pyramid, 1D deformable attention, and the encoder stack producing the video
representations consumed by the decoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError
from .ops import sinusoidal_encoding


@dataclass
class MultiScaleFeatures:
    """Per-scale feature matrices (len_i x D), finest first, plus metadata."""

    scales: list[torch.Tensor]

    def __post_init__(self):
        if not self.scales:
            raise ValueError("at least one scale required")

    @property
    def dim(self) -> int:
        return self.scales[0].shape[-1]

    @property
    def lengths(self) -> list[int]:
        return [s.shape[0] for s in self.scales]

    def flattened(self) -> torch.Tensor:
        """Concatenation of all scales along time, finest first."""
        return torch.cat(self.scales, dim=0)

    def token_positions(self) -> torch.Tensor:
        """Normalized center position in [0, 1] of every flattened token."""
        parts = [
            (torch.arange(n, dtype=self.scales[0].dtype) + 0.5) / n for n in self.lengths
        ]
        return torch.cat(parts)

    def token_scale_ids(self) -> torch.Tensor:
        parts = [torch.full((n,), i, dtype=torch.long) for i, n in enumerate(self.lengths)]
        return torch.cat(parts)


def rescale_frames(features: torch.Tensor, target_len: int) -> torch.Tensor:
    """Linear interpolation along time from T x D to V x D (identity if T == V)."""
    t = features.shape[0]
    if t == target_len:
        return features
    if t == 1:
        return features.expand(target_len, -1).clone()
    x = features.t().unsqueeze(0)  # 1 x D x T
    y = F.interpolate(x, size=target_len, mode="linear", align_corners=True)
    return y.squeeze(0).t()


class DownsamplePyramid(nn.Module):
    """Stride-1 projection at the finest scale, then stride-2 temporal convs."""

    def __init__(self, dim: int, num_scales: int, kernel_size: int = 3):
        super().__init__()
        self.num_scales = num_scales
        pad = kernel_size // 2
        self.proj = nn.Conv1d(dim, dim, kernel_size, stride=1, padding=pad)
        self.downs = nn.ModuleList(
            nn.Conv1d(dim, dim, kernel_size, stride=2, padding=pad)
            for _ in range(num_scales - 1)
        )

    def forward(self, frames: torch.Tensor) -> MultiScaleFeatures:
        v = frames.shape[0]
        factor = 2 ** (self.num_scales - 1)
        if v % factor != 0:
            min_v = ((v // factor) + 1) * factor
            raise ConfigurationError(
                f"frame count {v} not divisible by 2^(H-1)={factor}; "
                f"smallest valid length is {min_v}"
            )
        x = frames.t().unsqueeze(0)
        scales = [self.proj(x)]
        for down in self.downs:
            scales.append(down(scales[-1]))
        return MultiScaleFeatures([s.squeeze(0).t() for s in scales])


class DeformableAttention1d(nn.Module):
    """Multi-scale deformable attention over temporal feature pyramids.

    Each (query, head) predicts `points` sampling offsets and weights per
    scale, samples value features by linear interpolation around a normalized
    reference point, and mixes them with softmax weights over scales x points.
    """

    def __init__(self, dim: int, heads: int, num_scales: int, points: int = 4):
        super().__init__()
        if dim % heads != 0:
            raise ConfigurationError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.num_scales = num_scales
        self.points = points
        self.head_dim = dim // heads
        k = heads * num_scales * points
        self.sampling_offsets = nn.Linear(dim, k)
        self.attn_weights = nn.Linear(dim, k)
        self.value_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self._reset_offsets()

    def _reset_offsets(self):
        nn.init.zeros_(self.sampling_offsets.weight)
        # distinct initial sampling pattern per (head, scale, point)
        spread = torch.linspace(
            -0.1, 0.1, self.heads * self.num_scales * self.points
        )
        with torch.no_grad():
            self.sampling_offsets.bias.copy_(spread)
        nn.init.zeros_(self.attn_weights.weight)
        nn.init.zeros_(self.attn_weights.bias)

    def forward(
        self,
        queries: torch.Tensor,
        values: MultiScaleFeatures,
        ref_points: torch.Tensor,
        ref_widths: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """queries: Q x D; ref_points: Q in [0, 1]; optional ref_widths scale
        the predicted offsets (anchor-duration modulation in the decoder)."""
        q = queries.shape[0]
        m, s, p = self.heads, self.num_scales, self.points
        offsets = self.sampling_offsets(queries).view(q, m, s, p)
        if ref_widths is not None:
            offsets = offsets * ref_widths.view(q, 1, 1, 1)
        weights = self.attn_weights(queries).view(q, m, s * p)
        weights = torch.softmax(weights, dim=-1).view(q, m, s, p)
        locs = ref_points.view(q, 1, 1, 1) + offsets  # normalized positions

        out = torch.zeros(q, m, self.head_dim, dtype=queries.dtype, device=queries.device)
        for i, feat in enumerate(values.scales):
            n = feat.shape[0]
            v = self.value_proj(feat).view(n, m, self.head_dim)
            # continuous index of the normalized location on this scale's grid
            idx = (locs[:, :, i, :] * n - 0.5).clamp(0.0, n - 1.0)
            lo = idx.floor().long().clamp(0, n - 1)
            hi = (lo + 1).clamp(max=n - 1)
            frac = idx - lo.to(idx.dtype)
            head_ix = torch.arange(m).view(1, m, 1)
            v_lo = v[lo, head_ix]  # q x m x p x head_dim
            v_hi = v[hi, head_ix]
            sampled = v_lo + (v_hi - v_lo) * frac.unsqueeze(-1)
            out = out + (weights[:, :, i, :].unsqueeze(-1) * sampled).sum(dim=2)
        return self.out_proj(out.reshape(q, self.dim))


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, num_scales: int, points: int, ffn_dim: int):
        super().__init__()
        self.attn = DeformableAttention1d(dim, heads, num_scales, points)
        self.norm1 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_dim), nn.ReLU(), nn.Linear(ffn_dim, dim)
        )
        self.norm2 = nn.LayerNorm(dim)

    def forward(
        self, tokens: torch.Tensor, pos: torch.Tensor, values: MultiScaleFeatures,
        ref_points: torch.Tensor,
    ) -> torch.Tensor:
        attn_out = self.attn(tokens + pos, values, ref_points)
        x = self.norm1(tokens + attn_out)
        x = self.norm2(x + self.ffn(x))
        return x


class VideoEncoder(nn.Module):
    """Downsampling pyramid followed by deformable self-attention layers."""

    def __init__(
        self,
        dim: int,
        num_scales: int = 4,
        num_layers: int = 2,
        heads: int = 8,
        points: int = 4,
        ffn_dim: int | None = None,
        kernel_size: int = 3,
    ):
        super().__init__()
        self.dim = dim
        self.num_scales = num_scales
        self.pyramid = DownsamplePyramid(dim, num_scales, kernel_size)
        self.scale_embed = nn.Parameter(torch.zeros(num_scales, dim))
        nn.init.normal_(self.scale_embed, std=0.02)
        ffn_dim = ffn_dim or 2 * dim
        self.layers = nn.ModuleList(
            EncoderLayer(dim, heads, num_scales, points, ffn_dim)
            for _ in range(num_layers)
        )

    def positional_tokens(self, feats: MultiScaleFeatures) -> torch.Tensor:
        pos = sinusoidal_encoding(feats.token_positions(), self.dim).to(
            feats.scales[0].dtype
        )
        return pos + self.scale_embed[feats.token_scale_ids()]

    def forward(self, frames: torch.Tensor) -> MultiScaleFeatures:
        feats = self.pyramid(frames)
        lengths = feats.lengths
        tokens = feats.flattened()
        pos = self.positional_tokens(feats)
        refs = feats.token_positions().to(tokens.dtype)
        for layer in self.layers:
            values = MultiScaleFeatures(list(torch.split(tokens, lengths)))
            tokens = layer(tokens, pos, values, refs)
        return MultiScaleFeatures(list(torch.split(tokens, lengths)))
