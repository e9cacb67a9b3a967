"""End-to-end model: encoder -> query generation -> relation decoder ->
parallel heads, plus loss assembly and inference."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .config import RunConfig
from .decoder import DecoderState, RelationDecoder
from .encoder import MultiScaleFeatures, VideoEncoder, rescale_frames
from .geometry import TemporalInterval
from .heads import CaptionHead, EventCounter, EventPrediction, LocalizationHead
from .matching import LossReport, LossWeights, total_loss
from .ops import inverse_sigmoid
from .queries import EventQuerySet, QueryGenerator, proposal_loss


class LearnableQueries(nn.Module):
    """Position-prior-off baseline: free learnable embeddings and anchors."""

    def __init__(self, dim: int, num_queries: int):
        super().__init__()
        self.embeddings = nn.Parameter(torch.randn(num_queries, dim) * 0.02)
        init = torch.rand(num_queries, 2) * 0.8 + 0.1  # uniform anchors in (0.1, 0.9)
        self.anchor_logits = nn.Parameter(inverse_sigmoid(init))

    def forward(self, features: torch.Tensor) -> EventQuerySet:
        logits = self.anchor_logits.to(features.dtype)
        anchors = torch.sigmoid(logits)
        return EventQuerySet(
            embeddings=self.embeddings.to(features.dtype),
            anchors=anchors,
            anchor_logits=logits,
            static_anchors=anchors,
            centroids=anchors.detach(),
        )


class DenseEventModel(nn.Module):
    def __init__(self, config: RunConfig):
        super().__init__()
        config.validate()
        self.config = config
        d = config.dim
        self.encoder = VideoEncoder(
            dim=d,
            num_scales=config.num_scales,
            num_layers=config.enc_layers,
            heads=config.heads,
            points=config.sampling_points,
        )
        if config.position_prior:
            self.queries = QueryGenerator(d, config.num_queries, config.slot_iterations)
        else:
            self.queries = LearnableQueries(d, config.num_queries)
        self.decoder = RelationDecoder(
            dim=d,
            num_layers=config.dec_layers,
            heads=config.heads,
            num_scales=config.num_scales,
            points=config.sampling_points,
            relation_embed_dim=config.relation_embed_dim,
            use_relation=config.relation_prior,
            relation_metric=config.relation_metric,
        )
        self.localization = LocalizationHead(d)
        self.counter = EventCounter(d, config.c_max)
        self.captioner = CaptionHead(d, config.vocab_size, config.max_caption_len)
        self.loss_weights = LossWeights(
            loc=config.lambda_loc,
            cnt=config.lambda_cnt,
            cap=config.lambda_cap,
            prop=config.lambda_prop,
        )

    # --- forward pieces -------------------------------------------------

    def encode_video(self, frames: torch.Tensor) -> MultiScaleFeatures:
        frames = rescale_frames(frames, self.config.frame_len)
        return self.encoder(frames)

    def forward(self, frames: torch.Tensor):
        """Full forward pass: returns (video feats, query set, decoder states,
        per-layer (intervals, confidences), count logits)."""
        video = self.encode_video(frames)
        queries = self.queries(video.flattened())
        states = self.decoder(queries, video)
        layer_outputs = [
            self.localization(s.embeddings, s.anchor_logits) for s in states
        ]
        count_logits = self.counter(states[-1].embeddings)
        return video, queries, states, layer_outputs, count_logits

    def caption_nll_fn(self, video: MultiScaleFeatures, state: DecoderState, captions: list[list[int]]):
        """Mean per-token teacher-forced cross entropy over matched pairs."""
        bos = 1  # vocabulary convention: <bos> id 1

        def fn(pairs: list[tuple[int, int]]) -> torch.Tensor:
            losses = []
            counts = 0
            total = None
            for qi, gj in pairs:
                target = list(captions[gj]) + [2]  # append <eos>
                logits = self.captioner.teacher_forced_logits(
                    state.embeddings[qi], state.anchors[qi], video, target, bos
                )
                tgt = torch.tensor(target, device=logits.device)
                nll = torch.nn.functional.cross_entropy(logits, tgt, reduction="sum")
                total = nll if total is None else total + nll
                counts += len(target)
            return total / max(counts, 1)

        return fn

    def compute_loss(
        self, frames: torch.Tensor, gt_intervals: torch.Tensor, captions: list[list[int]]
    ) -> tuple[torch.Tensor, LossReport]:
        video, queries, states, layer_outputs, count_logits = self.forward(frames)
        if self.config.position_prior and gt_intervals.shape[0] > 0:
            l_prop = proposal_loss(queries.anchors, gt_intervals)
        else:
            l_prop = None
        caption_fn = self.caption_nll_fn(video, states[-1], captions)
        total, report, _ = total_loss(
            layer_outputs,
            count_logits,
            gt_intervals,
            caption_fn,
            l_prop,
            weights=self.loss_weights,
            deep_supervision=self.config.deep_supervision,
        )
        return total, report

    def _snap_interval(self, start: float, end: float) -> tuple[float, float]:
        """Quantize boundaries to the frame grid the features live on."""
        v = self.config.frame_len
        s = round(start * v) / v
        e = round(end * v) / v
        if e <= s:
            e = s + 1.0 / v
        return max(s, 0.0), min(e, 1.0)

    @torch.no_grad()
    def predict(
        self,
        frames: torch.Tensor,
        force_count: int | None = None,
        snap: bool | None = None,
    ) -> list[EventPrediction]:
        """Top-N_select events by confidence, ties broken by earlier start.

        With `snap` (default: config.snap_predictions) boundaries are rounded
        to the frame grid, since event extents are frame-aligned by design.
        """
        snap = self.config.snap_predictions if snap is None else snap
        video, _, states, layer_outputs, count_logits = self.forward(frames)
        intervals, conf = layer_outputs[-1]
        n_select = force_count if force_count is not None else EventCounter.n_select(count_logits)
        n_select = max(1, min(n_select, intervals.shape[0]))
        starts = intervals[:, 0] - intervals[:, 1] / 2.0
        order = sorted(
            range(intervals.shape[0]),
            key=lambda i: (-float(conf[i]), float(starts[i]), i),
        )
        preds = []
        for i in order[:n_select]:
            caption = self.captioner.greedy_decode(
                states[-1].embeddings[i], intervals[i], video, bos=1, eos=2
            )
            interval = TemporalInterval(
                float(intervals[i, 0]), max(float(intervals[i, 1]), 1e-6)
            ).clamped()
            if snap:
                s, e = self._snap_interval(interval.start, interval.end)
                interval = TemporalInterval.from_se(s, e)
            preds.append(
                EventPrediction(
                    interval=interval,
                    confidence=float(conf[i]),
                    caption=caption,
                    query_index=i,
                )
            )
        return preds

    def fit_query_prior(self, videos) -> np.ndarray | None:
        """Fit k-means centroids over the training split's (c, d) pairs."""
        if not self.config.position_prior:
            return None
        from .queries import fit_kmeans

        events = [
            [ev.center, ev.duration] for v in videos for ev, _ in v.events
        ]
        model = fit_kmeans(np.asarray(events), self.config.num_queries, seed=self.config.seed)
        self.queries.set_centroids(model.centroids)
        return model.centroids
