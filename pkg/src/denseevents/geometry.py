"""1D interval math: conversions, IoU/gIoU, location correlation and the
overlap-aware pairwise relation features used by the decoder.

Intervals are (center, duration) pairs normalized to video time. Tensor
variants operate on [..., 2] arrays and stay differentiable; the scalar
TemporalInterval type is the value currency at API boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class TemporalInterval:
    """Normalized event span as (center, duration)."""

    center: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")

    @property
    def start(self) -> float:
        return self.center - self.duration / 2.0

    @property
    def end(self) -> float:
        return self.center + self.duration / 2.0

    @classmethod
    def from_se(cls, start: float, end: float) -> "TemporalInterval":
        return cls((start + end) / 2.0, end - start)

    def clamped(self) -> "TemporalInterval":
        s = max(0.0, min(1.0, self.start))
        e = max(0.0, min(1.0, self.end))
        if e <= s:
            e = min(1.0, s + 1e-6)
        return TemporalInterval.from_se(s, e)

    def iou(self, other: "TemporalInterval") -> float:
        return float(iou_1d(self.as_tensor(), other.as_tensor()))

    def as_tensor(self, dtype=torch.float64) -> torch.Tensor:
        return torch.tensor([self.center, self.duration], dtype=dtype)


def cd_to_se(cd: torch.Tensor) -> torch.Tensor:
    """[..., 2] (center, duration) -> (start, end)."""
    c, d = cd[..., 0], cd[..., 1]
    return torch.stack([c - d / 2.0, c + d / 2.0], dim=-1)


def se_to_cd(se: torch.Tensor) -> torch.Tensor:
    s, e = se[..., 0], se[..., 1]
    return torch.stack([(s + e) / 2.0, e - s], dim=-1)


def iou_1d(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Intersection over union of (c, d) intervals; broadcasts over leading dims."""
    sa, sb = cd_to_se(a), cd_to_se(b)
    inter = (torch.minimum(sa[..., 1], sb[..., 1]) - torch.maximum(sa[..., 0], sb[..., 0])).clamp(min=0.0)
    union = a[..., 1] + b[..., 1] - inter
    return inter / union.clamp(min=1e-12)


def giou_1d(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Generalized IoU: IoU - (hull - union) / hull, in (-1, 1]."""
    sa, sb = cd_to_se(a), cd_to_se(b)
    inter = (torch.minimum(sa[..., 1], sb[..., 1]) - torch.maximum(sa[..., 0], sb[..., 0])).clamp(min=0.0)
    union = a[..., 1] + b[..., 1] - inter
    hull = torch.maximum(sa[..., 1], sb[..., 1]) - torch.minimum(sa[..., 0], sb[..., 0])
    hull = hull.clamp(min=1e-12)
    return inter / union.clamp(min=1e-12) - (hull - union) / hull


def giou_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return 1.0 - giou_1d(a, b)


def location_correlation(a: TemporalInterval, b: TemporalInterval) -> float:
    """1 + overlap / hull; in (0, 2] for intervals inside [0, 1]."""
    num = min(a.end, b.end) - max(a.start, b.start)
    den = max(a.end, b.end) - min(a.start, b.start)
    if den <= 0:
        raise ValueError("location_correlation: degenerate zero-length hull")
    return 1.0 + num / den


def relation_vector(p_i: torch.Tensor, p_j: torch.Tensor) -> torch.Tensor:
    """Overlap-aware pairwise relation [log(beta/d_i + 1), log(d_i/d_j)].

    beta is the absolute gap/overlap extent between the two boundary sets;
    the first component is exactly 0 iff the events are temporally connected
    (touching). Accepts [..., 2] (c, d) tensors and broadcasts.
    """
    si, sj = cd_to_se(p_i), cd_to_se(p_j)
    beta = (torch.minimum(si[..., 1], sj[..., 1]) - torch.maximum(si[..., 0], sj[..., 0])).abs()
    d_i = p_i[..., 1].clamp(min=1e-12)
    d_j = p_j[..., 1].clamp(min=1e-12)
    return torch.stack([torch.log1p(beta / d_i), torch.log(d_i / d_j)], dim=-1)


def pairwise_relation_matrix(anchors: torch.Tensor) -> torch.Tensor:
    """All-pairs relation vectors for N (c, d) anchors -> N x N x 2."""
    if anchors.dim() != 2 or anchors.shape[-1] != 2 or anchors.shape[0] < 1:
        raise ValueError(f"anchors must be N x 2, got {tuple(anchors.shape)}")
    return relation_vector(anchors[:, None, :], anchors[None, :, :])


def pairwise_center_relation_matrix(anchors: torch.Tensor) -> torch.Tensor:
    """Center-distance variant of the pairwise relation (comparison baseline):
    first channel log1p(|c_i - c_j| / d_i), second log(d_i / d_j)."""
    if anchors.dim() != 2 or anchors.shape[-1] != 2 or anchors.shape[0] < 1:
        raise ValueError(f"anchors must be N x 2, got {tuple(anchors.shape)}")
    c = anchors[:, 0]
    d = anchors[:, 1].clamp(min=1e-12)
    delta = (c[:, None] - c[None, :]).abs()
    first = torch.log1p(delta / d[:, None])
    second = torch.log(d[:, None] / d[None, :])
    return torch.stack([first, second], dim=-1)
