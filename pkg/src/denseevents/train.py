"""Training loop, run-directory management, inference and evaluation entry
points shared by the CLI and tests."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict

import numpy as np
import torch

from .config import RunConfig, save_config
from .errors import CheckpointError
from .evaluation import EvalReport, PredictedEvent, evaluate
from .geometry import TemporalInterval
from .model import DenseEventModel
from .params import ParamStore, load_checkpoint, read_manifest, save_checkpoint
from .synth import SyntheticVideo, build_vocabulary, generate_dataset, load_dataset


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % (2**32))


def resolve_dataset(config: RunConfig) -> list[SyntheticVideo]:
    if config.dataset_path:
        if not os.path.exists(config.dataset_path):
            raise FileNotFoundError(config.dataset_path)
        return load_dataset(config.dataset_path)
    return generate_dataset(
        config.n_videos,
        config.regime_mix,
        config.seed,
        config.frame_len,
        config.dim,
        config.feature_noise,
        cooccurrence=config.cooccurrence,
    )


def build_model(config: RunConfig) -> DenseEventModel:
    seed_everything(config.seed)
    return DenseEventModel(config)


def train(
    config: RunConfig,
    run_dir: str,
    dataset: list[SyntheticVideo] | None = None,
    max_steps: int | None = None,
    log_every: int = 0,
) -> tuple[DenseEventModel, str]:
    """End-to-end training; returns the model and final checkpoint path.

    Deterministic for a fixed (config, seed): single-threaded torch, all RNG
    seeded from config.seed.
    """
    os.makedirs(run_dir, exist_ok=True)
    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        save_config(config, os.path.join(run_dir, "config.ini"))
        vocab = build_vocabulary()
        vocab.save(os.path.join(run_dir, "vocab.json"))
        if dataset is None:
            dataset = resolve_dataset(config)
        model = build_model(config)
        centroids = model.fit_query_prior(dataset)
        optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
        store = ParamStore(model)

        csv_path = os.path.join(run_dir, "training.csv")
        step = 0
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "L_cls", "L_loc", "L_cnt", "L_cap", "L_prop", "total"])
            done = False
            for epoch in range(config.epochs):
                for video in dataset:
                    frames = torch.from_numpy(np.asarray(video.features, dtype=np.float32))
                    gts = video.intervals_tensor()
                    total, report = model.compute_loss(frames, gts, video.captions())
                    optimizer.zero_grad()
                    total.backward()
                    optimizer.step()
                    step += 1
                    writer.writerow(
                        [step]
                        + [f"{v:.8f}" for v in (
                            report.cls, report.loc, report.cnt, report.cap,
                            report.prop, report.total,
                        )]
                    )
                    if log_every and step % log_every == 0:
                        print(f"step {step}: total={report.total:.4f}")
                    if max_steps is not None and step >= max_steps:
                        done = True
                        break
                ckpt = os.path.join(run_dir, f"epoch_{epoch:03d}.ckpt")
                save_checkpoint(ckpt, store, _manifest(config, centroids))
                if done:
                    break
        store.check_finite()
        final = os.path.join(run_dir, "final.ckpt")
        save_checkpoint(final, store, _manifest(config, centroids))
        return model, final
    finally:
        torch.set_num_threads(prev_threads)


def _manifest(config: RunConfig, centroids: np.ndarray | None) -> dict:
    manifest = {"config": asdict(config), "seed": config.seed}
    if centroids is not None:
        manifest["centroid_cache"] = {
            "k": int(len(centroids)),
            "seed": config.seed,
            "centroids": np.asarray(centroids).tolist(),
        }
    return manifest


def load_model(checkpoint_path: str, config: RunConfig | None = None) -> DenseEventModel:
    manifest = read_manifest(checkpoint_path)
    saved = manifest.get("config", {})
    if config is None:
        saved.pop("extra", None)
        config = RunConfig(**saved).validate()
    else:
        for key in ("dim", "num_queries", "heads", "dec_layers", "enc_layers"):
            if key in saved and saved[key] != getattr(config, key):
                raise CheckpointError(
                    f"checkpoint/config mismatch on {key}: {saved[key]} vs {getattr(config, key)}"
                )
    model = build_model(config)
    load_checkpoint(checkpoint_path, ParamStore(model))
    if "centroid_cache" in manifest and config.position_prior:
        model.queries.set_centroids(np.asarray(manifest["centroid_cache"]["centroids"]))
    model.eval()
    return model


def run_inference(
    model: DenseEventModel, dataset: list[SyntheticVideo], force_count: int | None = None
) -> list[dict]:
    records = []
    for video in dataset:
        frames = torch.from_numpy(np.asarray(video.features, dtype=np.float32))
        preds = model.predict(frames, force_count=force_count)
        records.append(
            {
                "id": video.id,
                "events": [
                    {
                        "center": p.interval.center,
                        "duration": p.interval.duration,
                        "confidence": p.confidence,
                        "tokens": p.caption,
                    }
                    for p in preds
                ],
            }
        )
    return records


def save_predictions(records: list[dict], path: str) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def load_predictions(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def evaluate_predictions(records: list[dict], dataset: list[SyntheticVideo]) -> EvalReport:
    by_id = {rec["id"]: rec for rec in records}
    preds = []
    gts = []
    for video in dataset:
        rec = by_id.get(video.id, {"events": []})
        preds.append(
            [
                PredictedEvent(
                    interval=TemporalInterval(e["center"], max(e["duration"], 1e-6)),
                    confidence=e.get("confidence", 1.0),
                    tokens=list(e.get("tokens", [])),
                )
                for e in rec["events"]
            ]
        )
        gts.append(video.events)
    return evaluate(preds, gts)
