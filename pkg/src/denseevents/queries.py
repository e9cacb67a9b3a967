"""Position-anchored query generation.

Event queries are built from the data distribution rather than free learnable
embeddings: k-means centroids over ground-truth (center, duration) pairs seed
sinusoidal event slots, an iterative feature aggregator binds frame features
to the slots, and an offset MLP refines the centroids into scene-specific
event anchors. A Hungarian-matched gIoU proposal loss supervises the anchors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .geometry import giou_1d
from .matching import hungarian
from .ops import encode_coordinates, inverse_sigmoid, mlp


@dataclass
class ClusterModel:
    centroids: np.ndarray  # k x 2 (center, duration)
    inertia: float
    seed: int
    inertia_history: list[float] = field(default_factory=list)


def fit_kmeans(
    events: np.ndarray | list, k: int, seed: int = 0, max_iter: int = 100
) -> ClusterModel:
    """Lloyd's algorithm with seeded k-means++ init on (c, d) pairs.

    Deterministic given the seed; inertia is non-increasing per iteration.
    Fewer distinct points than k pads the data with jittered duplicates.
    """
    pts = np.asarray(events, dtype=np.float64).reshape(-1, 2)
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    distinct = np.unique(pts, axis=0)
    if distinct.shape[0] < k:
        warnings.warn(
            f"only {distinct.shape[0]} distinct points for k={k}; padding with jittered duplicates"
        )
        extra_idx = rng.integers(0, pts.shape[0], size=k - distinct.shape[0])
        extra = pts[extra_idx] + rng.normal(0.0, 1e-3, size=(len(extra_idx), 2))
        pts = np.concatenate([pts, extra], axis=0)

    # k-means++ seeding
    centroids = np.empty((k, 2))
    centroids[0] = pts[rng.integers(0, pts.shape[0])]
    d2 = ((pts - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(len(pts), 1.0 / len(pts))
        centroids[i] = pts[rng.choice(len(pts), p=probs)]
        d2 = np.minimum(d2, ((pts - centroids[i]) ** 2).sum(axis=1))

    history: list[float] = []
    assign = np.zeros(len(pts), dtype=int)
    for _ in range(max_iter):
        dist = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        inertia = float(dist[np.arange(len(pts)), assign].sum())
        if history and inertia > history[-1] + 1e-12:
            raise AssertionError("k-means inertia increased")
        converged = bool(history) and history[-1] - inertia <= 1e-12
        history.append(inertia)
        for c in range(k):
            members = pts[assign == c]
            if len(members) > 0:
                centroids[c] = members.mean(axis=0)
            else:
                # reseed an empty cluster at the farthest point
                far = ((pts - centroids[assign]) ** 2).sum(axis=1).argmax()
                centroids[c] = pts[far]
        if converged:
            break
    dist = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    inertia = float(dist.min(axis=1).sum())
    history.append(min(inertia, history[-1]) if history else inertia)
    return ClusterModel(centroids=centroids, inertia=history[-1], seed=seed, inertia_history=history)


def init_event_slots(centroids: torch.Tensor, dim: int) -> torch.Tensor:
    """Project N (c, d) centroids to N x D sinusoidal event slots."""
    return encode_coordinates(centroids, dim)


@dataclass
class EventQuerySet:
    """Paired (embedding, anchor) event queries plus the frozen position prior."""

    embeddings: torch.Tensor  # N x D
    anchors: torch.Tensor  # N x 2 in (0, 1)
    anchor_logits: torch.Tensor  # N x 2, inverse-sigmoid space
    static_anchors: torch.Tensor  # N x 2, frozen copy of the initial anchors
    centroids: torch.Tensor  # N x 2

    def __post_init__(self):
        n = self.embeddings.shape[0]
        if not (self.anchors.shape[0] == self.static_anchors.shape[0] == n):
            raise ValueError("embeddings and anchors must agree in count")


class FeatureAggregator(nn.Module):
    """Iterative slot-style binding of flattened frame features to event slots.

    Attention is softmaxed and then renormalized over the slot dimension so
    each visual token distributes unit weight across slots. Transform weights
    are shared across iterations.
    """

    def __init__(self, dim: int, iterations: int = 3, mlp_hidden: int | None = None):
        super().__init__()
        self.iterations = iterations
        self.dim = dim
        self.norm_slots = nn.LayerNorm(dim)
        self.norm_feat = nn.LayerNorm(dim)
        self.norm_pre_mlp = nn.LayerNorm(dim)
        self.to_q = nn.Linear(dim, dim)
        self.to_k = nn.Linear(dim, dim)
        self.to_v = nn.Linear(dim, dim)
        self.mlp = mlp([dim, mlp_hidden or dim, dim])

    def step(self, slots: torch.Tensor, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        q = self.to_q(self.norm_slots(slots))  # N x D
        fn = self.norm_feat(features)
        k = self.to_k(fn)  # T x D
        v = self.to_v(fn)
        logits = q @ k.t() / self.dim**0.5  # N x T
        attn = torch.softmax(logits, dim=0)  # competition across slots
        attn_tilde = attn / attn.sum(dim=0, keepdim=True).clamp(min=1e-12)
        updates = slots + attn_tilde @ v
        slots = updates + self.mlp(self.norm_pre_mlp(updates))
        return slots, attn_tilde

    def forward(self, slots: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        for _ in range(self.iterations):
            slots, _ = self.step(slots, features)
        return slots


class QueryGenerator(nn.Module):
    """Builds the EventQuerySet for one video from flattened encoded features."""

    # see DecoderLayer.offset_gain
    offset_gain: float = 8.0

    def __init__(self, dim: int, num_queries: int, iterations: int = 3):
        super().__init__()
        self.dim = dim
        self.num_queries = num_queries
        self.register_buffer("centroids", torch.full((num_queries, 2), 0.5))
        self.aggregator = FeatureAggregator(dim, iterations)
        self.offset_mlp = mlp([dim, dim, 2])
        nn.init.zeros_(self.offset_mlp[-1].weight)
        nn.init.zeros_(self.offset_mlp[-1].bias)

    def set_centroids(self, centroids: np.ndarray | torch.Tensor) -> None:
        c = torch.as_tensor(centroids, dtype=self.centroids.dtype)
        if c.shape != (self.num_queries, 2):
            raise ValueError(f"expected {self.num_queries} x 2 centroids, got {tuple(c.shape)}")
        with torch.no_grad():
            self.centroids.copy_(c)

    def forward(self, features: torch.Tensor) -> EventQuerySet:
        centroids = self.centroids.to(features.dtype)
        slots0 = init_event_slots(centroids, self.dim).to(features.dtype)
        slots = self.aggregator(slots0, features)
        logits = inverse_sigmoid(centroids) + self.offset_gain * self.offset_mlp(slots)
        anchors = torch.sigmoid(logits)
        return EventQuerySet(
            embeddings=slots,
            anchors=anchors,
            anchor_logits=logits,
            static_anchors=anchors,
            centroids=centroids,
        )


def proposal_loss(anchors: torch.Tensor, gt_intervals: torch.Tensor) -> torch.Tensor:
    """Hungarian-matched sum of gIoU losses between anchors and ground truths."""
    if gt_intervals.shape[0] == 0:
        raise ValueError("proposal_loss requires at least one ground-truth event")
    n, g = anchors.shape[0], gt_intervals.shape[0]
    if g > n:
        warnings.warn(f"{g - n} ground-truth events unmatched (more gts than anchors)")
    cost = 1.0 - giou_1d(anchors[:, None, :], gt_intervals[None, :, :])
    pairs = hungarian(cost.detach())
    pred = torch.stack([anchors[i] for i, _ in pairs])
    tgt = torch.stack([gt_intervals[j] for _, j in pairs])
    return (1.0 - giou_1d(pred, tgt)).sum()
