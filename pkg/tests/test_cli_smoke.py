"""
CLI smoke tests.

Every verb is invoked through typer's CliRunner on small synthetic clips.
Machine output is read back from ``--out`` files because the runner mixes
log lines on stderr into the captured output.
"""
from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from typer.testing import CliRunner

from rigstable.cli import app
from rigstable.storage import read_clip


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def clip_file(runner, tmp_path):
    path = tmp_path / "clip.json"
    result = runner.invoke(app, ["--seed", "3", "synth-gen", str(path), "--sigma", "0.01"])
    assert result.exit_code == 0, result.output
    return path


class TestGeneration:
    """synth-gen and perturb."""

    def test_synth_gen(self, runner, tmp_path):
        path = tmp_path / "walk.json"
        result = runner.invoke(app, ["synth-gen", str(path), "--joints", "5", "--frames", "4", "--clip-id", "walk"])
        assert result.exit_code == 0, result.output
        clip = read_clip(path)
        assert clip.clip_id == "walk"
        assert clip.frame_count == 4
        assert clip.anchor.joint_count == 5

    def test_synth_gen_count(self, runner, tmp_path):
        out = tmp_path / "clips"
        result = runner.invoke(app, ["synth-gen", str(out), "--count", "3", "--gen-seed", "10"])
        assert result.exit_code == 0, result.output
        names = sorted(p.name for p in out.glob("*.json"))
        assert names == [f"synth-two_branch-j6-s{s}.json" for s in (10, 11, 12)]

    def test_invalid_config_exits_2(self, runner, tmp_path):
        result = runner.invoke(app, ["synth-gen", str(tmp_path / "x.json"), "--joints", "1"])
        assert result.exit_code == 2
        assert "INVALID_CONFIG" in result.output
        assert not (tmp_path / "x.json").exists()

    def test_perturb(self, runner, clip_file, tmp_path):
        out = tmp_path / "noisy.json"
        result = runner.invoke(app, ["perturb", str(clip_file), str(out), "--sigma", "0.05"])
        assert result.exit_code == 0, result.output
        src, noisy = read_clip(clip_file), read_clip(out)
        assert np.array_equal(src.anchor.joints, noisy.anchor.joints)
        assert not np.array_equal(src.skeleton_frames[1].joints, noisy.skeleton_frames[1].joints)


class TestTokens:
    def test_tokenize_detokenize(self, runner, clip_file, tmp_path):
        tokens, decoded = tmp_path / "tokens.json", tmp_path / "decoded.json"
        assert runner.invoke(app, ["tokenize", str(clip_file), str(tokens), "--n-disc", "64"]).exit_code == 0
        doc = json.loads(tokens.read_text())
        assert doc["n_disc"] == 64
        assert len(doc["frames"]) == 3
        assert runner.invoke(app, ["detokenize", str(tokens), str(decoded)]).exit_code == 0
        src, back = read_clip(clip_file), read_clip(decoded)
        assert back.anchor.parents.tolist() == src.anchor.parents.tolist()
        assert np.abs(back.anchor.joints - src.anchor.joints).max() <= 1.0 / 64


class TestLosses:
    """skel-loss and skin-loss."""

    def test_skel_loss(self, runner, clip_file, tmp_path):
        out = tmp_path / "loss.json"
        result = runner.invoke(app, ["skel-loss", str(clip_file), "--out", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert doc["kind"] == "skeleton"
        assert set(doc["terms"]) == {"total", "token_total", "token_anchor", "token_sym", "geom_total"}
        assert all(v >= 0 for v in doc["terms"].values())
        assert [f["frame"] for f in doc["frames"]] == [1, 2]
        assert doc["params"]["lambda_geom"] == 0.5

    def test_skel_loss_params_file(self, runner, clip_file, tmp_path):
        params, out = tmp_path / "params.yaml", tmp_path / "loss.json"
        params.write_text("geom:\n  lambda_geom: 2.0\n  rho: 0.5\n")
        result = runner.invoke(app, ["--params", str(params), "skel-loss", str(clip_file), "--out", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert doc["params"]["lambda_geom"] == 2.0
        assert doc["params"]["geom"]["rho"] == 0.5

    def test_bad_params_exit_2(self, runner, clip_file, tmp_path):
        params = tmp_path / "params.yaml"
        params.write_text("geom:\n  rho: 7\n")
        result = runner.invoke(app, ["--params", str(params), "skel-loss", str(clip_file)])
        assert result.exit_code == 2
        assert "INVALID_PARAMS" in result.output

    def test_skin_loss(self, runner, clip_file, tmp_path):
        out, samples = tmp_path / "skin.json", tmp_path / "samples.csv"
        result = runner.invoke(app, [
            "skin-loss", str(clip_file), "--n-samples", "64", "--samples-csv", str(samples), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert set(doc["terms"]) == {"total", "sym", "l1", "anchor", "ent", "prior"}
        assert doc["terms"]["sym"] == pytest.approx(0.0, abs=1e-9)
        assert doc["terms"]["l1"] == pytest.approx(0.0, abs=1e-9)
        assert samples.exists()


class TestMetrics:
    """skel-metrics, skin-metrics and report."""

    def test_skel_metrics_csv(self, runner, tmp_path):
        clips = tmp_path / "clips"
        assert runner.invoke(app, ["synth-gen", str(clips), "--count", "2", "--sigma", "0.01"]).exit_code == 0
        out = tmp_path / "report.csv"
        result = runner.invoke(app, ["skel-metrics", str(clips), "--format", "csv", "--out", str(out)])
        assert result.exit_code == 0, result.output
        rows = list(csv.DictReader(out.open()))
        assert [r["clip_id"] for r in rows] == sorted(r["clip_id"] for r in rows)
        assert len(rows) == 2
        assert all(float(r["pjdd"]) > 0 for r in rows)

    def test_skel_metrics_then_report(self, runner, clip_file, tmp_path):
        report_json, md = tmp_path / "report.json", tmp_path / "report.md"
        result = runner.invoke(app, [
            "skel-metrics", str(clip_file), "--reference", str(clip_file), "--out", str(report_json),
        ])
        assert result.exit_code == 0, result.output
        doc = json.loads(report_json.read_text())
        assert doc["aggregate"]["clip_count"] == 1
        assert doc["clips"][0]["metrics"]["mpjpe"] == 0.0
        for column in ("cd_j2j", "cd_j2b", "cd_b2b"):
            assert doc["clips"][0]["metrics"][column] == 0.0
        result = runner.invoke(app, ["report", str(report_json), "--out", str(md)])
        assert result.exit_code == 0, result.output
        text = md.read_text()
        assert "| **Mean** |" in text
        assert "CD-J2J" in text and "CD-B2B" in text

    def test_skin_metrics(self, runner, clip_file, tmp_path):
        out = tmp_path / "skin.json"
        result = runner.invoke(app, ["skin-metrics", str(clip_file), "--out", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert doc["kind"] == "skin"
        assert doc["clips"][0]["metrics"]["l1_bca"] == 0.0
        cons_j = doc["clips"][0]["cons_j"]
        assert len(cons_j) == doc["clips"][0]["joints"]
        assert cons_j == pytest.approx([0.0] * len(cons_j), abs=1e-15)

    def test_missing_input_exit_2(self, runner, tmp_path):
        result = runner.invoke(app, ["skel-metrics", str(tmp_path / "absent.json")])
        assert result.exit_code == 2

    def test_malformed_clip_exit_1(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        result = runner.invoke(app, ["skel-metrics", str(bad)])
        assert result.exit_code == 1
        assert "BAD_CLIP_FILE" in result.output

    def test_unknown_format_exit_2(self, runner, clip_file):
        result = runner.invoke(app, ["skel-metrics", str(clip_file), "--format", "xml"])
        assert result.exit_code == 2


class TestDemoFinetune:
    def test_short_run(self, runner, tmp_path):
        trace, out = tmp_path / "trace.csv", tmp_path / "finetune.json"
        result = runner.invoke(app, [
            "demo-finetune", "--steps", "3", "--n-samples", "64", "--trace-out", str(trace), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        rows = list(csv.DictReader(trace.open()))
        assert [int(r["step"]) for r in rows] == [0, 1, 2, 3]
        assert list(rows[0]) == ["step", "total", "sym", "l1", "anchor", "ent", "prior"]
        doc = json.loads(out.read_text())
        assert set(doc["before"]) == {"l1_bca", "symkl_bca", "entropy"}
        assert len(doc["joint_delta"]) == 6
        assert len(doc["cons_before"]) == 6
        assert len(doc["cons_after"]) == 6
        assert doc["ablation"] is None
