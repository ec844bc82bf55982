"""CLI pipelines: artifact flow, determinism, error contracts."""

import json
from pathlib import Path

import pytest

from scenecov.cli import load_run_config, main


def run_config(tmp_path, **extra):
    doc = {
        "out_dir": str(tmp_path / "out"),
        "seed": 7,
        "synth": {"n_scenes": 12, "n_scenes_test": 10, "actor_count": [2, 6]},
        "encoder": {"layers": 2, "hidden": 16, "embed_dim": 8, "projection_dim": 4,
                    "batch": 8, "stages": 1, "warmup_epochs": 1, "lr0": 0.003},
    }
    doc.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def run(args):
    return main([str(a) for a in args])


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"tpyo": 1}))
        assert run(["--config", path, "synth"]) == 1

    def test_env_override(self, tmp_path, monkeypatch):
        path = run_config(tmp_path)
        monkeypatch.setenv("SCENECOV_SYNTH__N_SCENES", "3")
        monkeypatch.setenv("SCENECOV_SEED", "99")
        config = load_run_config(path)
        assert config.synth["n_scenes"] == 3
        assert config.seed == 99

    def test_bad_encoder_value(self, tmp_path):
        path = run_config(tmp_path, encoder={"hidden": -4})
        assert run(["--config", path, "synth"]) == 1


class TestPipeline:
    def test_full_pipeline(self, tmp_path, capsys):
        config = run_config(tmp_path)
        out = tmp_path / "out"
        for args in (["synth"], ["build-graphs"], ["match"], ["compare"],
                     ["train"], ["embed"], ["density"],
                     ["pca", "--role", "ref", "--dims", "2"]):
            assert run(["--config", config] + args) == 0, args
        # nn needs a real scene id
        first_scene = json.loads((out / "scenes_ref.json").read_text())["scenes"][0]
        assert run(["--config", config, "nn", "--query", first_scene["scene_id"],
                    "--k", "3"]) == 0
        for name in ("map.json", "scenes_ref.json", "scenes_test.json",
                     "graphs_ref.json", "graph_stats_ref.csv",
                     "coverage_ref.json", "coverage_test.json",
                     "compare/structural.csv", "compare/holes.csv",
                     "compare/cooccurrence_diff.csv", "compare/summary.json",
                     "model/checkpoint.json", "model/loss_history.csv",
                     "embeddings_ref.csv", "embeddings_test.csv",
                     "density/summary.json", "pca/projection.csv"):
            assert (out / name).exists(), name

    def test_missing_artifact_names_producer(self, tmp_path, capsys):
        config = run_config(tmp_path)
        assert run(["--config", config, "match"]) == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert "build-graphs" in err["error"]["message"]

    def test_embed_without_checkpoint_points_at_train(self, tmp_path, capsys):
        config = run_config(tmp_path)
        assert run(["--config", config, "synth"]) == 0
        assert run(["--config", config, "build-graphs"]) == 0
        assert run(["--config", config, "embed"]) == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert "train" in err["error"]["message"]

    def test_compare_identical_sets_zero_deltas(self, tmp_path):
        config = run_config(tmp_path)
        out = tmp_path / "out"
        assert run(["--config", config, "synth"]) == 0
        assert run(["--config", config, "build-graphs", "--role", "ref"]) == 0
        assert run(["--config", config, "match", "--role", "ref"]) == 0
        # reuse the ref coverage table as the test side
        (out / "coverage_test.json").write_text((out / "coverage_ref.json").read_text())
        assert run(["--config", config, "compare"]) == 0
        rows = (out / "compare/structural.csv").read_text().strip().splitlines()[1:]
        for row in rows:
            assert float(row.rsplit(",", 1)[1]) == 0.0
        summary = json.loads((out / "compare/summary.json").read_text())
        assert summary["n_parametric_holes"] == 0

    def test_platoon_scene_reduces_edges(self, tmp_path):
        config = run_config(
            tmp_path,
            synth={"n_scenes": 5, "actor_count": [4, 4],
                   "archetype_weights": {"four_platoon_intersection": 1.0}})
        out = tmp_path / "out"
        assert run(["--config", config, "synth"]) == 0
        assert run(["--config", config, "build-graphs", "--role", "ref"]) == 0
        rows = (out / "graph_stats_ref.csv").read_text().strip().splitlines()[1:]
        for row in rows:
            cells = row.split(",")
            discovered, final = int(cells[3]), int(cells[4])
            assert final < discovered

    def test_byte_identical_reruns(self, tmp_path):
        results = {}
        for tag in ("one", "two"):
            out = tmp_path / tag
            config = run_config(tmp_path, out_dir=str(out))
            for args in (["synth"], ["build-graphs"], ["match"], ["compare"]):
                assert run(["--config", config] + args) == 0
            results[tag] = {
                p.relative_to(out): p.read_bytes()
                for p in sorted(out.rglob("*")) if p.is_file()
            }
        assert results["one"] == results["two"]
