import json
import os
import subprocess
import sys

import numpy as np
import pytest

from robustlab.cli import main
from robustlab.config import ConfigError, validate_config
from robustlab.shardio import read_shard

MICRO = {
    "seed": 5,
    "seeds": [5],
    "out": "",   # filled per test
    "data": {"n_train_per_class": 4, "n_val_per_class": 4,
             "n_conflict": 56, "n_probe": 56},
    "train": {"epochs": 2, "batch_size": 16, "adv_eval_every": 2},
    "attack": {"epsilon": 1.0, "alpha": 0.25, "steps": 2},
}


def write_cfg(tmp_path, **overrides):
    cfg = json.loads(json.dumps(MICRO))
    cfg.update(overrides)
    cfg["out"] = str(tmp_path / "run")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestConfigValidation:
    def test_unknown_key_reports_json_pointer(self):
        with pytest.raises(ConfigError) as err:
            validate_config({"data": {"n_samples": 3}})
        assert err.value.pointer == "/data/n_samples"

    def test_wrong_type_reports_pointer(self):
        with pytest.raises(ConfigError) as err:
            validate_config({"train": {"epochs": "many"}})
        assert err.value.pointer == "/train/epochs"

    def test_defaults_fill_in(self):
        cfg = validate_config({})
        assert cfg["train"]["epochs"] > 0
        assert cfg["attack"]["steps"] == 7
        assert set(cfg["analyses"]) == {"bias", "tv", "match", "noise-tv",
                                        "dissect", "ablate"}

    def test_bad_config_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"data": {"bogus": 1}}))
        rc = main(["--config", str(path), "gen-data"])
        assert rc == 2
        assert "/data/bogus" in capsys.readouterr().err


class TestSubcommands:
    def test_gen_data_deterministic_digests(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["--config", cfg, "gen-data"]) == 0
        run = tmp_path / "run"
        manifest1 = json.loads((run / "manifest.json").read_text())
        assert main(["--config", cfg, "gen-data"]) == 0
        manifest2 = json.loads((run / "manifest.json").read_text())
        d1 = manifest1["steps"][-1]["outputs"]
        d2 = manifest2["steps"][-1]["outputs"]
        assert d1 == d2
        assert len(d1) == 5

    def test_missing_artifact_exits_3(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        rc = main(["--config", cfg, "train", "--regime", "standard"])
        assert rc == 3
        assert "missing input artifact" in capsys.readouterr().err

    def test_train_then_analyze_bias_csv_contract(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["--config", cfg, "gen-data"]) == 0
        for regime in ("standard", "adversarial", "texture-randomized"):
            assert main(["--config", cfg, "train", "--regime", regime]) == 0
        assert main(["--config", cfg, "analyze", "bias"]) == 0
        bias = (tmp_path / "run" / "seed5" / "analysis" / "bias.csv").read_text()
        lines = bias.strip().split("\n")
        assert lines[0] == "model,regime,n,shape,texture,shape_bias"
        assert len(lines) == 4

    def test_distort_emits_shard_and_png(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["--config", cfg, "gen-data"]) == 0
        assert main(["--config", cfg, "distort", "--kind", "scramble",
                     "--p", "2", "--png"]) == 0
        out = tmp_path / "run" / "seed5" / "shards" / "val_scramble_p2.rlsh"
        assert out.exists()
        shard = read_shard(out)
        assert len(shard) == 32
        png_dir = tmp_path / "run" / "seed5" / "png" / "val_scramble_p2"
        assert (png_dir / "meta.jsonl").exists()

    def test_report_renders_not_run_sections_on_empty_dir(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["--config", cfg, "report"]) == 0
        page = (tmp_path / "run" / "report" / "index.html").read_text()
        assert page.count("not run") >= 5

    def test_seed_override_changes_artifacts(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["--config", cfg, "--seed", "9", "gen-data"]) == 0
        assert (tmp_path / "run" / "seed9").exists()

    def test_console_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "robustlab.cli", "--help"],
                             capture_output=True, text=True)
        assert res.returncode == 0
        assert "repro-all" in res.stdout


class TestReportContent:
    def test_bias_bars_match_csv_passthrough(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["--config", cfg, "gen-data"]) == 0
        for regime in ("standard", "adversarial", "texture-randomized"):
            assert main(["--config", cfg, "train", "--regime", regime]) == 0
        assert main(["--config", cfg, "analyze", "bias"]) == 0
        assert main(["--config", cfg, "report"]) == 0
        csv = (tmp_path / "run" / "seed5" / "analysis" / "bias.csv").read_text()
        values = [line.split(",")[-1] for line in csv.strip().split("\n")[1:]]
        svg = (tmp_path / "run" / "report" / "bias.svg").read_text()
        for v in values:
            assert f"{float(v):.4g}" in svg

    def test_noise_tv_scatter_point_count_equals_channels(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["--config", cfg, "gen-data"]) == 0
        for regime in ("standard", "adversarial"):
            assert main(["--config", cfg, "train", "--regime", regime]) == 0
        assert main(["--config", cfg, "analyze", "noise-tv"]) == 0
        assert main(["--config", cfg, "report"]) == 0
        svg = (tmp_path / "run" / "report" / "noise_tv_seed5.svg").read_text()
        # conv1 has 16 channels per model, two models
        assert svg.count('fill-opacity="0.65"') == 32
