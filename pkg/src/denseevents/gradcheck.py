"""Full-pipeline finite-difference verification at toy dimensions."""

from __future__ import annotations

import torch

from .config import RunConfig
from .model import DenseEventModel
from .ops import GradCheckReport, grad_check


def toy_config(seed: int = 0) -> RunConfig:
    return RunConfig(
        dim=8,
        num_scales=2,
        num_queries=4,
        slot_iterations=1,
        enc_layers=1,
        dec_layers=1,
        heads=2,
        relation_embed_dim=4,
        sampling_points=2,
        frame_len=16,
        c_max=4,
        vocab_size=16,
        max_caption_len=6,
        seed=seed,
    )


def full_pipeline_gradcheck(
    seed: int = 0,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    config: RunConfig | None = None,
) -> GradCheckReport:
    """Checks analytic gradients of the total training loss (encoder ->
    queries -> decoder -> heads -> losses) against central differences in
    double precision."""
    torch.manual_seed(seed)
    config = config or toy_config(seed)
    model = DenseEventModel(config).double()
    if config.position_prior:
        centers = torch.linspace(0.15, 0.85, config.num_queries)
        durations = 0.15 + 0.05 * (torch.arange(config.num_queries) % 3)
        model.queries.set_centroids(torch.stack([centers, durations], dim=1))
    gen = torch.Generator().manual_seed(seed + 1)
    frames = torch.randn(config.frame_len, config.dim, generator=gen, dtype=torch.float64)
    gts = torch.tensor([[0.3, 0.25], [0.7, 0.2]], dtype=torch.float64)
    captions = [
        torch.randint(4, config.vocab_size, (4,), generator=gen).tolist(),
        torch.randint(4, config.vocab_size, (5,), generator=gen).tolist(),
    ]

    def loss() -> torch.Tensor:
        return model.compute_loss(frames, gts, captions)[0]

    return grad_check(loss, model, step=step, tolerance=tolerance)
