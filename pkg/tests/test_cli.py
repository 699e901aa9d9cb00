import json
import os
import subprocess
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from rxdet import read_mask, read_raster, read_scoremap, rx_fit, rx_score, write_mask, write_raster, write_scoremap
from rxdet.cli import main
from rxdet.raster import Mask, Raster, ScoreMap


@pytest.fixture
def runner():
    return CliRunner()


def run_ok(runner, args, **kw):
    result = runner.invoke(main, args, catch_exceptions=False, **kw)
    assert result.exit_code == 0, result.output
    return result


def make_scene(runner, tmp_path, preset="reference", extra=()):
    scene = tmp_path / "scene.bsq"
    mask = tmp_path / "mask.bsq"
    run_ok(runner, ["synth", "--preset", preset, "--output", str(scene),
                    "--mask-out", str(mask), *extra])
    return scene, mask


class TestSynth:
    def test_reference_preset(self, runner, tmp_path):
        scene, mask = make_scene(runner, tmp_path)
        r = read_raster(scene)
        m = read_mask(mask)
        assert (r.height, r.width, r.bands) == (100, 100, 2)
        assert int(m.labels.sum()) == 272

    def test_patchwork_preset_is_12_band(self, runner, tmp_path):
        scene, mask = make_scene(runner, tmp_path, preset="patchwork")
        r = read_raster(scene)
        assert (r.height, r.width, r.bands) == (400, 400, 12)
        assert int(read_mask(mask).labels.sum()) == 16 * 30

    def test_seed_changes_scene_not_count(self, runner, tmp_path):
        s1, m1 = make_scene(runner, tmp_path)
        s2 = tmp_path / "scene2.bsq"
        m2 = tmp_path / "mask2.bsq"
        run_ok(runner, ["synth", "--preset", "reference", "--seed", "99",
                        "--output", str(s2), "--mask-out", str(m2)])
        assert s1.read_bytes() != s2.read_bytes()
        assert read_mask(m1).labels.sum() == read_mask(m2).labels.sum()

    def test_manifest_written(self, runner, tmp_path):
        scene, _ = make_scene(runner, tmp_path)
        manifest = json.loads((tmp_path / "scene.bsq.manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["anomalous_pixels"] == 272


class TestDetect:
    def test_rx_matches_library_on_csv_example(self, runner, tmp_path, gen):
        # the 4-point fit example as a 2x2, 2-band CSV raster
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        raster = Raster(height=2, width=2, bands=2, samples=X)
        src = tmp_path / "four.csv"
        write_raster(raster, src, "csv")
        out = tmp_path / "scores.csv"
        run_ok(runner, ["detect", "--input", str(src), "--input-format", "csv",
                        "--method", "rx", "--output", str(out),
                        "--output-format", "csv", "--ridge", "0.01"])
        scores = read_scoremap(out, "csv").scores
        expect = rx_score(rx_fit(X, ridge=0.01), X)
        assert np.array_equal(scores, expect)

    def test_deterministic_replay(self, runner, tmp_path):
        scene, _ = make_scene(runner, tmp_path)
        a, b = tmp_path / "a.bsq", tmp_path / "b.bsq"
        for out in (a, b):
            run_ok(runner, ["detect", "--input", str(scene), "--method", "rrx",
                            "--output", str(out), "--seed", "5"])
        assert a.read_bytes() == b.read_bytes()

    def test_manifest_records_resolved_sigma(self, runner, tmp_path):
        scene, _ = make_scene(runner, tmp_path)
        out = tmp_path / "s.bsq"
        run_ok(runner, ["detect", "--input", str(scene), "--method", "krx",
                        "--subsample", "300", "--output", str(out)])
        manifest = json.loads((tmp_path / "s.bsq.manifest.json").read_text())
        assert manifest["resolved_sigma"] > 0
        assert manifest["timings"]["fit_seconds"] >= 0

    def test_missing_input_exits_3_no_partial_output(self, runner, tmp_path):
        out = tmp_path / "never.bsq"
        result = runner.invoke(main, ["detect", "--input", str(tmp_path / "nope.bsq"),
                                      "--method", "rx", "--output", str(out)])
        assert result.exit_code == 3
        assert not out.exists()
        assert not list(tmp_path.glob("*.tmp.*"))

    def test_numeric_failure_exits_4(self, runner, tmp_path):
        flat = Raster(height=2, width=2, bands=1, samples=np.ones((4, 1)))
        src = tmp_path / "flat.bsq"
        write_raster(flat, src)
        result = runner.invoke(main, ["detect", "--input", str(src), "--method", "rx",
                                      "--ridge", "0", "--output", str(tmp_path / "o.bsq")])
        assert result.exit_code == 4

    def test_usage_error_exits_2(self, runner):
        assert runner.invoke(main, ["detect", "--nonsense"]).exit_code == 2


class TestEval:
    def test_perfect_scores_auc_one(self, runner, tmp_path):
        mask = Mask(height=1, width=4, labels=np.array([0, 0, 1, 1], dtype=bool))
        smap = ScoreMap(height=1, width=4, scores=np.array([0.1, 0.2, 0.9, 1.0]))
        mp, sp = tmp_path / "m.bsq", tmp_path / "s.bsq"
        write_mask(mask, mp)
        write_scoremap(smap, sp, "bsq-binary")
        result = run_ok(runner, ["eval", "--scores", str(sp), "--mask", str(mp)])
        assert "AUC 1.0" in result.output

    def test_roc_csv_and_log_svg(self, runner, tmp_path):
        scene, mask = make_scene(runner, tmp_path)
        out = tmp_path / "sc.bsq"
        run_ok(runner, ["detect", "--input", str(scene), "--method", "rx",
                        "--output", str(out)])
        roc = tmp_path / "roc.csv"
        svg = tmp_path / "roc.svg"
        run_ok(runner, ["eval", "--scores", str(out), "--mask", str(mask),
                        "--roc-out", str(roc), "--svg-out", str(svg), "--log-x"])
        lines = roc.read_text().splitlines()
        assert lines[0] == "fpr,tpr,threshold"
        assert lines[1].startswith("0.0,0.0,inf")
        body = svg.read_text()
        assert body.startswith("<svg") and "(log)" in body

    def test_dim_mismatch_exits_3(self, runner, tmp_path):
        mask = Mask(height=2, width=2, labels=np.array([0, 0, 1, 1], dtype=bool))
        smap = ScoreMap(height=1, width=4, scores=np.array([0.1, 0.2, 0.9, 1.0]))
        mp, sp = tmp_path / "m.bsq", tmp_path / "s.bsq"
        write_mask(mask, mp)
        write_scoremap(smap, sp, "bsq-binary")
        result = runner.invoke(main, ["eval", "--scores", str(sp), "--mask", str(mp)])
        assert result.exit_code == 3


class TestBench:
    def test_sweep_rows_and_replayable_manifest(self, runner, tmp_path):
        out = tmp_path / "bench.csv"
        run_ok(runner, ["bench", "--method", "rrx", "--pixels", "500", "--bands", "2",
                        "--sweep", "8,16", "--repeats", "2", "--output", str(out)])
        lines = out.read_text().splitlines()
        assert lines[0] == "method,phase,n,d,param,wall_seconds"
        assert len(lines) == 1 + 2 * 4 * 2  # sweep x phases x repeats
        manifest = json.loads((tmp_path / "bench.csv.manifest.json").read_text())
        assert manifest["config"]["sweep"] == "8,16"

    def test_rx_has_no_transform_rows(self, runner, tmp_path):
        out = tmp_path / "bench.csv"
        run_ok(runner, ["bench", "--method", "rx", "--pixels", "400",
                        "--repeats", "2", "--output", str(out)])
        assert "transform" not in out.read_text()

    def test_compare_backends_emits_tagged_rows(self, runner, tmp_path):
        out = tmp_path / "bench.csv"
        run_ok(runner, ["bench", "--method", "rrx", "--pixels", "400",
                        "--repeats", "1", "--compare-backends", "--output", str(out)])
        text = out.read_text()
        assert "rrx+python,detection" in text


class TestGridsearchCommand:
    def test_singleton_grid_deterministic(self, runner, tmp_path):
        scene, mask = make_scene(runner, tmp_path, preset="patchwork")
        out1, out2 = tmp_path / "g1.csv", tmp_path / "g2.csv"
        args = ["gridsearch", "--scene", str(scene), "--mask", str(mask),
                "--feature-count", "32", "--lambda-grid", "1e-4",
                "--c-grid", "1.0", "--seed", "3"]
        r1 = run_ok(runner, args + ["--output", str(out1)])
        r2 = run_ok(runner, args + ["--output", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()
        assert "best lambda=0.0001 c=1" in r1.output
        header = out1.read_text().splitlines()[0]
        assert header.startswith("lambda\\c,")


class TestConfigAndEnv:
    def test_config_file_supplies_defaults_flags_override(self, runner, tmp_path):
        scene, _ = make_scene(runner, tmp_path)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# detector run\nmethod = rx\nridge = 0.5\n"
            f"input = {scene}\n"
        )
        out = tmp_path / "out.bsq"
        run_ok(runner, ["detect", "--config", str(cfg), "--output", str(out),
                        "--ridge", "0.25"])
        manifest = json.loads((tmp_path / "out.bsq.manifest.json").read_text())
        assert manifest["config"]["method"] == "rx"  # from config file
        assert manifest["config"]["ridge"] == 0.25  # flag wins

    def test_malformed_config_line(self, runner, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("method rx\n")
        result = runner.invoke(main, ["detect", "--config", str(cfg),
                                      "--input", "x", "--method", "rx",
                                      "--output", "y"])
        assert result.exit_code == 3

    def test_seed_env_var_is_default_only(self, runner, tmp_path):
        scene, _ = make_scene(runner, tmp_path)
        out_env = tmp_path / "env.bsq"
        out_flag = tmp_path / "flag.bsq"
        env = {**os.environ, "RXDET_SEED": "11"}
        run_ok(runner, ["detect", "--input", str(scene), "--method", "rrx",
                        "--output", str(out_env)], env=env)
        manifest = json.loads((tmp_path / "env.bsq.manifest.json").read_text())
        assert manifest["config"]["seed"] == 11
        run_ok(runner, ["detect", "--input", str(scene), "--method", "rrx",
                        "--output", str(out_flag), "--seed", "3"], env=env)
        manifest = json.loads((tmp_path / "flag.bsq.manifest.json").read_text())
        assert manifest["config"]["seed"] == 3


def test_console_script_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "rxdet.cli", "--version"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "rxdet" in result.stdout
