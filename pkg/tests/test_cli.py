import io
import json

import pandas as pd
import pytest

from cli.asm2tv import main
from conftest import TINY_SPEC


@pytest.fixture
def cfg_file(tiny_config, tmp_path):
    path = tmp_path / "tiny.cfg"
    tiny_config(max_steps=3).save(path)
    return path


@pytest.fixture
def trained(cfg_file, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg_file), "--seed", "7", "--out", str(run)]) == 0
    return run


class TestTrain:
    def test_creates_run_dir(self, trained):
        assert (trained / "checkpoint.best").exists()
        assert "seed = 7" in (trained / "config.snapshot").read_text()

    def test_rerun_is_byte_identical(self, cfg_file, trained, tmp_path):
        again = tmp_path / "again"
        assert main(["train", "--config", str(cfg_file), "--seed", "7", "--out", str(again)]) == 0
        for name in ("checkpoint.best", "checkpoint.last", "losses.csv", "metrics.csv", "config.snapshot"):
            assert (trained / name).read_bytes() == (again / name).read_bytes(), name

    def test_unknown_flag(self, cfg_file, capsys):
        assert main(["train", "--config", str(cfg_file), "--foo", "1"]) == 2
        assert "foo" in capsys.readouterr().err

    def test_bad_config_key(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("no_such_knob = 3\n")
        assert main(["train", "--config", str(path)]) == 2
        assert "no_such_knob" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(f"manifest = {tmp_path / 'absent.json'}\n")
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "r")]) == 3


class TestEval:
    def test_prints_per_task_csv(self, trained, capsys):
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(trained / "checkpoint.best")]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "task,acc,macro_f1,weighted_f1"
        assert [l.split(",")[0] for l in lines[1:]] == ["0", "1", "mean"]

    def test_best_checkpoint_reproduces_best_validation_score(self, trained, capsys):
        events = [json.loads(l) for l in (trained / "events.jsonl").read_text().splitlines()]
        best   = next(e for e in events if e["event"] == "stop")["best_val_macro_f1"]
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(trained / "checkpoint.best"), "--split", "val"]) == 0
        captured = capsys.readouterr()
        frame    = pd.read_csv(io.StringIO(captured.out))
        assert float(frame.loc[frame["task"] == "mean", "macro_f1"].iloc[0]) == pytest.approx(best, abs=1e-12)
        assert "active under hard routing" in captured.err

    def test_missing_checkpoint(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "nope")]) == 3


class TestGenSynth:
    def test_byte_identical(self, tmp_path):
        args = ["--seed", "1", "--tasks", "2", "--views", "3", "--groups", "2", "--samples-per-class", "20"]
        assert main(["gen-synth", "--out", str(tmp_path / "a"), *args]) == 0
        assert main(["gen-synth", "--out", str(tmp_path / "b"), *args]) == 0
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_invalid_spec(self, tmp_path):
        assert main(["gen-synth", "--out", str(tmp_path), "--views", "2", "--groups", "3"]) == 2


class TestDtw:
    def test_same_file_is_zero(self, tiny_manifest, capsys):
        f = str(tiny_manifest.parent / "t0_v0.csv")
        assert main(["dtw", f, f]) == 0
        assert float(capsys.readouterr().out.strip()) == 0.0

    def test_manifest_profile(self, tiny_manifest, capsys):
        assert main(["dtw", "--manifest", str(tiny_manifest), "--max-len", "64"]) == 0
        frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
        assert list(frame.columns) == ["view", "dtw"] and len(frame) == TINY_SPEC["n_views"]

    def test_needs_two_files(self, tiny_manifest):
        assert main(["dtw", str(tiny_manifest.parent / "t0_v0.csv")]) == 2


class TestGates:
    def test_export(self, trained, tmp_path, tiny_manifest, capsys):
        out = tmp_path / "gates.csv"
        assert main(["gates", "--checkpoint", str(trained / "checkpoint.best"), "--out", str(out),
                     "--manifest", str(tiny_manifest)]) == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["unit", "block_0", "block_1"]
        assert len(frame) == TINY_SPEC["n_tasks"] * TINY_SPEC["n_views"]
        assert "ARI" in capsys.readouterr().err


class TestAblate:
    def test_blocks_summary(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "abl.csv"
        assert main(["ablate", "--config", str(cfg_file), "--axis", "blocks", "--values", "1,2,4",
                     "--seeds", "3", "--out", str(out)]) == 0
        frame = pd.read_csv(out)
        assert len(frame) == 3 and list(frame["value"]) == [1, 2, 4]

    def test_infeasible_ratio(self, cfg_file, tmp_path):
        assert main(["ablate", "--config", str(cfg_file), "--axis", "unlabeled_ratio",
                     "--values", "100", "--seeds", "1", "--out", str(tmp_path / "x.csv")]) == 2
