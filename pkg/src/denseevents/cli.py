"""Command-line interface.

Subcommands: generate | stats | train | eval | infer | gradcheck.
Exit codes: 0 success, 1 failure, 2 missing file, 3 invalid config,
4 checkpoint/config mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import torch

from .config import RunConfig, load_config
from .errors import CheckpointError, ConfigurationError
from .gradcheck import full_pipeline_gradcheck
from .synth import (
    archetype_embeddings,
    build_vocabulary,
    dataset_statistics,
    generate_video,
    load_dataset,
    save_dataset,
)
from .train import (
    evaluate_predictions,
    load_model,
    load_predictions,
    resolve_dataset,
    run_inference,
    save_predictions,
    train,
)

EXIT_MISSING_FILE = 2
EXIT_BAD_CONFIG = 3
EXIT_CKPT_MISMATCH = 4


def _load_config(args) -> RunConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = RunConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config.validate()


def _generate_chunk(payload) -> list:
    config_kwargs, indices = payload
    cfg = RunConfig(**config_kwargs)
    vocab = build_vocabulary()
    arch = archetype_embeddings(cfg.dim, cfg.seed)
    out = []
    for i in indices:
        regime = (
            ("hierarchical" if i % 2 == 0 else "sequential")
            if cfg.regime_mix == "mixed"
            else cfg.regime_mix
        )
        rng = np.random.default_rng((cfg.seed, i))
        out.append(
            generate_video(
                f"v{cfg.seed:04d}_{i:05d}", regime, rng, vocab, arch,
                cfg.frame_len, cfg.feature_noise, cooccurrence=cfg.cooccurrence,
            )
        )
    return out


def cmd_generate(args) -> int:
    config = _load_config(args)
    indices = list(range(config.n_videos))
    kwargs = {
        k: getattr(config, k)
        for k in (
            "dim", "seed", "regime_mix", "frame_len", "feature_noise",
            "n_videos", "cooccurrence",
        )
    }
    if args.workers > 1:
        chunks = [indices[i :: args.workers] for i in range(args.workers)]
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            parts = list(pool.map(_generate_chunk, [(kwargs, c) for c in chunks]))
        videos = [v for part in parts for v in part]
        videos.sort(key=lambda v: v.id)
    else:
        videos = _generate_chunk((kwargs, indices))[: config.n_videos]
    save_dataset(videos, args.out)
    print(f"wrote {len(videos)} videos to {args.out}")
    return 0


def cmd_stats(args) -> int:
    videos = load_dataset(args.dataset)
    stats = dataset_statistics(videos)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "events_scatter.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["center", "duration"])
        writer.writerows(stats.centers_durations.tolist())
    with open(os.path.join(args.out_dir, "lc_similarity.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location_correlation", "caption_similarity"])
        writer.writerows(stats.lc_similarity_pairs.tolist())
    report = {
        "lc_similarity_corr": stats.lc_similarity_corr,
        "duration_centrality_corr": stats.duration_centrality_corr,
        "n_events": int(len(stats.centers_durations)),
        "n_pairs": int(len(stats.lc_similarity_pairs)),
    }
    with open(os.path.join(args.out_dir, "stats.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    train(config, args.run_dir, max_steps=args.max_steps, log_every=args.log_every)
    print(f"run complete: {args.run_dir}")
    return 0


def cmd_infer(args) -> int:
    config = load_config(os.path.join(os.path.dirname(args.checkpoint), "config.ini")) \
        if args.config is None and os.path.exists(os.path.join(os.path.dirname(args.checkpoint), "config.ini")) \
        else (_load_config(args) if args.config else None)
    model = load_model(args.checkpoint, config)
    dataset = load_dataset(args.dataset)
    records = run_inference(model, dataset, force_count=args.force_count)
    save_predictions(records, args.out)
    if args.dump_attention:
        _dump_attention(model, dataset, args.out + ".attention.json")
    print(f"wrote predictions for {len(records)} videos to {args.out}")
    return 0


def _dump_attention(model, dataset, path: str) -> None:
    video = dataset[0]
    frames = torch.from_numpy(np.asarray(video.features, dtype=np.float32))
    with torch.no_grad():
        _, _, states, _, _ = model.forward(frames)
    dump = []
    for s in states:
        entry = {"layer": s.layer_index}
        if s.attention_map is not None:
            entry["attention"] = s.attention_map.tolist()
        if s.relation_mask is not None:
            entry["relation_mask"] = s.relation_mask.tolist()
        dump.append(entry)
    with open(path, "w") as fh:
        json.dump({"video": video.id, "layers": dump}, fh)


def cmd_eval(args) -> int:
    dataset = load_dataset(args.dataset)
    if args.predictions:
        records = load_predictions(args.predictions)
    else:
        model = load_model(args.checkpoint, _load_config(args) if args.config else None)
        records = run_inference(model, dataset)
    report = evaluate_predictions(records, dataset)
    payload = report.as_dict()
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
        with open(os.path.splitext(args.out)[0] + ".csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for key in ("precision", "recall", "f1", "bleu4"):
                writer.writerow([key, payload[key]])
    print(json.dumps(payload, indent=2))
    return 0


def cmd_gradcheck(args) -> int:
    start = time.time()
    report = full_pipeline_gradcheck(seed=args.seed or 0, tolerance=args.tolerance)
    elapsed = time.time() - start
    print(f"{report.summary()} ({elapsed:.1f}s)")
    for name, err in sorted(report.per_param.items(), key=lambda kv: -kv[1])[:5]:
        print(f"  worst: {name} rel_err={err:.3e}")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="denseevents")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("stats", help="dataset statistics (scatter + LC/similarity)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate predictions or a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--predictions", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="run inference, writing predictions JSONL")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--force-count", type=int, default=None)
    p.add_argument("--dump-attention", action="store_true")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("gradcheck", help="full-pipeline finite-difference check")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ConfigurationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CKPT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
