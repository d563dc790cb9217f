import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from stereosal import store
from stereosal.cli import EXIT_OK, EXIT_UNIT_FAILED, EXIT_USAGE, FUSION_CHOICES, main
from stereosal.evaluation import METRICS
from stereosal.forest import FORMAT_VERSION
from stereosal.fusion import FEATURE_KEYS
from stereosal.io import read_raw
from stereosal.manifest import OUTPUT_ENV
from stereosal.synthetic import make_demo

SHAPE = (36, 64)
BASELINE_ROWS = ["chance", "center", "one_human", "infinite_humans"]


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    """A small demo taken through extract, train and predict once."""
    root = tmp_path_factory.mktemp("demo")
    manifest = make_demo(root, n_frames=3, shape=SHAPE, seed=4)
    assert run("extract", "--manifest", manifest) == EXIT_OK
    assert run("train", "--manifest", manifest) == EXIT_OK
    assert run("predict", "--manifest", manifest, "--fusion", "forest", "--fusion", "average") == EXIT_OK
    return manifest


@pytest.fixture
def fresh(tmp_path):
    return make_demo(tmp_path / "d", n_frames=2, shape=SHAPE, seed=9)


class TestExtract:
    def test_outputs(self, demo):
        out = demo.parent / "out"
        for v in ("clip1", "clip2", "clip3"):
            idx = store.read_index(out / "stacks" / v)
            assert idx["features"] == list(FEATURE_KEYS)
            assert (idx["height"], idx["width"]) == SHAPE
            assert len(idx["frames"]) == 3
        t = json.loads((out / "timings.json").read_text())
        assert t["frames"] == 9
        assert "texture" in t["seconds_per_frame"]

    def test_resume_skips_complete_videos(self, fresh, capsys):
        assert run("extract", "--manifest", fresh) == EXIT_OK
        stacks = fresh.parent / "out" / "stacks"
        before = {p: p.stat().st_mtime_ns for p in stacks.rglob("*.f32")}
        (stacks / "clip2" / store.INDEX_NAME).unlink()  # as if interrupted mid-video
        capsys.readouterr()
        assert run("extract", "--manifest", fresh) == EXIT_OK
        assert "1 video(s) done, 2 up to date" in capsys.readouterr().out
        for p, t in before.items():
            if p.parent.name != "clip2":
                assert p.stat().st_mtime_ns == t
        assert store.is_complete(stacks / "clip2", FEATURE_KEYS, store.read_index(stacks / "clip2")["config_hash"])

    def test_config_change_invalidates(self, fresh, tmp_path, capsys):
        assert run("extract", "--manifest", fresh) == EXIT_OK
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"pipeline": {"color_bins": 6}}))
        capsys.readouterr()
        assert run("extract", "--manifest", fresh, "--config", cfg) == EXIT_OK
        assert "3 video(s) done, 0 up to date" in capsys.readouterr().out

    def test_corrupt_disparity_isolated(self, fresh):
        bad = sorted((fresh.parent / "clip2" / "disparity").iterdir())[1]
        bad.write_bytes(b"P5\n64 36\n65535\n\x00\x01")  # truncated payload
        assert run("extract", "--manifest", fresh) == EXIT_UNIT_FAILED
        stacks = fresh.parent / "out" / "stacks"
        assert (stacks / "clip1" / store.INDEX_NAME).exists()
        assert (stacks / "clip3" / store.INDEX_NAME).exists()
        assert not (stacks / "clip2" / store.INDEX_NAME).exists()

    def test_missing_input_isolated(self, fresh):
        shutil.rmtree(fresh.parent / "clip3" / "disparity")
        assert run("extract", "--manifest", fresh) == EXIT_UNIT_FAILED
        assert (fresh.parent / "out" / "stacks" / "clip1" / store.INDEX_NAME).exists()

    def test_parallel_matches_serial(self, fresh, tmp_path, monkeypatch):
        assert run("extract", "--manifest", fresh) == EXIT_OK
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "par"))
        assert run("extract", "--manifest", fresh, "--workers", "3") == EXIT_OK
        for p in (fresh.parent / "out" / "stacks").rglob("*.f32"):
            q = tmp_path / "par" / "stacks" / p.parent.name / p.name
            np.testing.assert_array_equal(read_raw(p), read_raw(q))

    def test_output_dir_env(self, fresh, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "elsewhere"))
        assert run("extract", "--manifest", fresh, "--features", "depth,face") == EXIT_OK
        idx = store.read_index(tmp_path / "elsewhere" / "stacks" / "clip1")
        assert idx["features"] == ["depth", "face"]
        assert not (fresh.parent / "out").exists()

    def test_unknown_feature_is_usage_error(self, fresh, capsys):
        assert run("extract", "--manifest", fresh, "--features", "sparkle") == EXIT_USAGE
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_artifacts(self, demo):
        out = demo.parent / "out"
        log = json.loads((out / "train_log.json").read_text())
        assert log["n_trees"] == 40 and log["min_leaf"] == 10
        assert log["features_per_split"] == 5  # ceil(sqrt(24))
        assert log["videos"] == ["clip1"]
        assert log["frames"] == 3
        assert len(log["features"]) == 24

    def test_byte_identical_rerun(self, demo, tmp_path, monkeypatch):
        out = demo.parent / "out"
        first = (out / "model.json").read_bytes()
        shutil.copytree(out / "stacks", tmp_path / "o" / "stacks")
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "o"))
        assert run("train", "--manifest", demo, "--workers", "2") == EXIT_OK
        assert (tmp_path / "o" / "model.json").read_bytes() == first

    def test_seed_changes_model(self, demo, tmp_path, monkeypatch):
        out = demo.parent / "out"
        shutil.copytree(out / "stacks", tmp_path / "o" / "stacks")
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "o"))
        assert run("train", "--manifest", demo, "--seed", "77") == EXIT_OK
        assert (tmp_path / "o" / "model.json").read_bytes() != (out / "model.json").read_bytes()

    def test_without_stacks(self, fresh, capsys):
        assert run("train", "--manifest", fresh) == EXIT_USAGE
        assert "run extract first" in capsys.readouterr().err


class TestPredict:
    def test_maps_written_and_normalized(self, demo):
        out = demo.parent / "out"
        for scheme in ("forest", "average"):
            for v in ("clip1", "clip2", "clip3"):
                files = sorted((out / "predictions" / scheme / v).glob("*.f32"))
                assert len(files) == 3
                for f in files:
                    m = read_raw(f)
                    assert m.shape == SHAPE
                    assert m.min() >= 0.0 and m.max() <= 1.0
                    assert f.with_suffix(".png").exists()

    def test_model_version_mismatch(self, demo, tmp_path, monkeypatch, capsys):
        out = demo.parent / "out"
        shutil.copytree(out / "stacks", tmp_path / "o" / "stacks")
        d = json.loads((out / "model.json").read_text())
        d["version"] = FORMAT_VERSION + 1
        (tmp_path / "o" / "model.json").write_text(json.dumps(d))
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "o"))
        assert run("predict", "--manifest", demo) == EXIT_USAGE
        assert "version" in capsys.readouterr().err

    def test_stack_version_mismatch(self, demo, tmp_path, monkeypatch, capsys):
        out = demo.parent / "out"
        shutil.copytree(out / "stacks", tmp_path / "o" / "stacks")
        shutil.copy(out / "model.json", tmp_path / "o" / "model.json")
        p = tmp_path / "o" / "stacks" / "clip2" / store.INDEX_NAME
        idx = json.loads(p.read_text())
        idx["version"] = 99
        p.write_text(json.dumps(idx))
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "o"))
        assert run("predict", "--manifest", demo) == EXIT_USAGE
        assert "re-run extract" in capsys.readouterr().err

    def test_without_model(self, fresh, capsys):
        assert run("extract", "--manifest", fresh, "--features", "depth") == EXIT_OK
        assert run("predict", "--manifest", fresh) == EXIT_USAGE
        assert "run train first" in capsys.readouterr().err


class TestImportance:
    def test_csv(self, demo):
        assert run("importance", "--manifest", demo) == EXIT_OK
        rows = read_csv(demo.parent / "out" / "importance.csv")
        assert len(rows) == 24
        assert {r["key"] for r in rows} == set(FEATURE_KEYS)
        imp = np.array([float(r["importance"]) for r in rows])
        assert imp.max() == pytest.approx(1.0)
        assert imp.min() >= 0.0
        assert np.all(np.diff(imp) <= 0)  # sorted descending


class TestEvaluate:
    def test_report(self, demo):
        assert run("evaluate", "--manifest", demo, "--fusion", "forest", "--fusion", "average") == EXIT_OK
        out = demo.parent / "out"
        rows = read_csv(out / "report.csv")
        assert [r["model"] for r in rows] == ["forest", "average"] + BASELINE_ROWS
        for m in METRICS:
            assert m in rows[0] and f"{m}_ci95" in rows[0]
        assert len(METRICS) == 7
        ih = next(r for r in rows if r["model"] == "infinite_humans")
        assert float(ih["PCC"]) == pytest.approx(1.0)
        assert float(ih["KLD"]) == pytest.approx(0.0, abs=1e-9)
        pv = read_csv(out / "report_pvalues.csv")
        assert {r["metric"] for r in pv} == set(METRICS)
        assert all(0.0 <= float(r["p_value"]) <= 1.0 for r in pv if r["p_value"] not in ("", "nan"))
        assert (out / "report.txt").read_text().startswith("Model")

    def test_postprocess_and_histogram_match(self, demo, tmp_path, monkeypatch):
        out = demo.parent / "out"
        shutil.copytree(out, tmp_path / "o")
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "o"))
        assert run("evaluate", "--manifest", demo, "--postprocess", "--histogram-match") == EXIT_OK
        rows = read_csv(tmp_path / "o" / "report.csv")
        assert rows[0]["model"] == "forest"
        for m in METRICS:
            assert np.isfinite(float(rows[0][m]))

    def test_missing_predictions(self, demo, capsys):
        assert run("evaluate", "--manifest", demo, "--fusion", "sdw") == EXIT_USAGE
        assert "run predict --fusion sdw" in capsys.readouterr().err


class TestCompareFusion:
    def test_table(self, demo):
        assert run("compare-fusion", "--manifest", demo) == EXIT_OK
        rows = read_csv(demo.parent / "out" / "fusion_comparison.csv")
        assert [r["fusion"] for r in rows] == list(FUSION_CHOICES) + ["svr"]
        assert all(rows[-1][m] == "unavailable" for m in METRICS)
        for r in rows[:-1]:
            assert all(np.isfinite(float(r[m])) for m in METRICS)


class TestEntryPoint:
    def test_make_demo(self, tmp_path):
        assert run("make-demo", tmp_path / "x", "--frames", "2") == EXIT_OK
        m = json.loads((tmp_path / "x" / "manifest.json").read_text())
        assert sorted(m["videos"]) == ["clip1", "clip2", "clip3"]

    def test_bad_manifest(self, tmp_path, capsys):
        assert run("extract", "--manifest", tmp_path / "none.json") == EXIT_USAGE
        assert "cannot read manifest" in capsys.readouterr().err

    def test_module_invocation(self):
        r = subprocess.run([sys.executable, "-m", "stereosal.cli", "--help"], capture_output=True, text=True)
        assert r.returncode == 0
        assert "compare-fusion" in r.stdout
