import json
import os

import pytest

from denseevents.cli import (
    EXIT_BAD_CONFIG,
    EXIT_CKPT_MISMATCH,
    EXIT_MISSING_FILE,
    main,
)
from denseevents.config import RunConfig, save_config
from denseevents.train import load_predictions


def toy_config(**overrides) -> RunConfig:
    base = dict(
        dim=16, num_scales=2, num_queries=4, slot_iterations=1,
        enc_layers=1, dec_layers=1, heads=2, relation_embed_dim=4,
        sampling_points=2, frame_len=16, c_max=8, vocab_size=64,
        max_caption_len=8, epochs=1, n_videos=3, feature_noise=0.05, seed=0,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture
def config_path(tmp_path):
    path = str(tmp_path / "run.ini")
    save_config(toy_config(), path)
    return path


class TestExitCodes:
    def test_missing_dataset_file(self, tmp_path):
        code = main(["stats", "--dataset", str(tmp_path / "nope.jsonl"),
                     "--out-dir", str(tmp_path / "out")])
        assert code == EXIT_MISSING_FILE

    def test_missing_config_file(self, tmp_path):
        code = main(["generate", "--config", str(tmp_path / "nope.ini"),
                     "--out", str(tmp_path / "d.jsonl")])
        assert code == EXIT_MISSING_FILE

    def test_invalid_config(self, tmp_path):
        path = str(tmp_path / "bad.ini")
        with open(path, "w") as fh:
            fh.write("[model]\ndim = 30\nheads = 8\n")
        code = main(["generate", "--config", path, "--out", str(tmp_path / "d.jsonl")])
        assert code == EXIT_BAD_CONFIG

    def test_checkpoint_mismatch(self, tmp_path, config_path):
        run_dir = str(tmp_path / "run")
        assert main(["train", "--config", config_path, "--run-dir", run_dir,
                     "--max-steps", "2"]) == 0
        # evaluate the checkpoint against a config with a different width
        bad_cfg = str(tmp_path / "wider.ini")
        save_config(toy_config(dim=32), bad_cfg)
        data = str(tmp_path / "d.jsonl")
        assert main(["generate", "--config", config_path, "--out", data]) == 0
        code = main(["eval", "--dataset", data,
                     "--checkpoint", os.path.join(run_dir, "final.ckpt"),
                     "--config", bad_cfg])
        assert code == EXIT_CKPT_MISMATCH


class TestPipeline:
    def test_generate_stats_train_infer_eval(self, tmp_path, config_path):
        data = str(tmp_path / "data.jsonl")
        assert main(["generate", "--config", config_path, "--out", data]) == 0
        assert os.path.exists(data)

        stats_dir = str(tmp_path / "stats")
        assert main(["stats", "--dataset", data, "--out-dir", stats_dir]) == 0
        report = json.load(open(os.path.join(stats_dir, "stats.json")))
        assert "lc_similarity_corr" in report
        assert os.path.exists(os.path.join(stats_dir, "events_scatter.csv"))

        run_dir = str(tmp_path / "run")
        assert main(["train", "--config", config_path, "--run-dir", run_dir,
                     "--max-steps", "3"]) == 0
        ckpt = os.path.join(run_dir, "final.ckpt")
        assert os.path.exists(ckpt)
        assert os.path.exists(os.path.join(run_dir, "training.csv"))

        preds = str(tmp_path / "preds.jsonl")
        assert main(["infer", "--checkpoint", ckpt, "--dataset", data,
                     "--out", preds]) == 0
        records = load_predictions(preds)
        assert len(records) == 3

        out = str(tmp_path / "eval.json")
        assert main(["eval", "--dataset", data, "--predictions", preds,
                     "--out", out]) == 0
        payload = json.load(open(out))
        assert set(payload) >= {"precision", "recall", "f1", "bleu4"}
        assert os.path.exists(str(tmp_path / "eval.csv"))

    def test_generate_workers_match_serial(self, tmp_path, config_path):
        a = str(tmp_path / "serial.jsonl")
        b = str(tmp_path / "parallel.jsonl")
        assert main(["generate", "--config", config_path, "--out", a]) == 0
        assert main(["generate", "--config", config_path, "--out", b,
                     "--workers", "2"]) == 0
        assert open(a).read() == open(b).read()

    def test_force_count_limits_predictions(self, tmp_path, config_path):
        data = str(tmp_path / "data.jsonl")
        run_dir = str(tmp_path / "run")
        assert main(["generate", "--config", config_path, "--out", data]) == 0
        assert main(["train", "--config", config_path, "--run-dir", run_dir,
                     "--max-steps", "2"]) == 0
        preds = str(tmp_path / "preds.jsonl")
        assert main(["infer", "--checkpoint", os.path.join(run_dir, "final.ckpt"),
                     "--dataset", data, "--out", preds, "--force-count", "2"]) == 0
        for rec in load_predictions(preds):
            assert len(rec["events"]) == 2

    def test_dump_attention(self, tmp_path, config_path):
        data = str(tmp_path / "data.jsonl")
        run_dir = str(tmp_path / "run")
        assert main(["generate", "--config", config_path, "--out", data]) == 0
        assert main(["train", "--config", config_path, "--run-dir", run_dir,
                     "--max-steps", "2"]) == 0
        preds = str(tmp_path / "preds.jsonl")
        assert main(["infer", "--checkpoint", os.path.join(run_dir, "final.ckpt"),
                     "--dataset", data, "--out", preds, "--dump-attention"]) == 0
        dump = json.load(open(preds + ".attention.json"))
        assert dump["layers"]
        layer = dump["layers"][0]
        assert "attention" in layer and "relation_mask" in layer

    def test_seed_override_changes_generation(self, tmp_path, config_path):
        a = str(tmp_path / "a.jsonl")
        b = str(tmp_path / "b.jsonl")
        assert main(["--seed", "1", "generate", "--config", config_path, "--out", a]) == 0
        assert main(["--seed", "2", "generate", "--config", config_path, "--out", b]) == 0
        assert open(a).read() != open(b).read()
