import csv
import json
from pathlib import Path

import pytest

from selfcollide.cli import main
from selfcollide.dataset import load_dataset
from selfcollide.neuralnet import load_model


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def robot_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "arm.csv"
    assert run("--threads", 1, "gen-data", "--desk-arm", "--n-per-class", 200, "--seed", 1, "--out", p) == 0
    return p


@pytest.fixture(scope="module")
def disc_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "disc.csv"
    assert run("gen-data", "--synthetic2d", "--n-per-class", 100, "--out", p) == 0
    return p


class TestGenData:
    def test_synthetic(self, disc_csv):
        ds = load_dataset(disc_csv)
        assert len(ds) == 200 and ds.d == 2

    def test_reproducible_bytes(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            assert run("gen-data", "--synthetic2d", "--n-per-class", 100, "--seed", 4, "--out", tmp_path / name) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_manifest(self, robot_csv):
        man = json.loads(Path(f"{robot_csv}.manifest.json").read_text())
        assert man["command"] == "gen-data"
        assert man["seed"] == 1
        for key in ("argv", "flags", "inputs", "outputs", "tool_version", "timestamp"):
            assert key in man

    def test_missing_robot(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        assert run("gen-data", "--robot", missing, "--n-per-class", 10, "--out", tmp_path / "x.csv") == 2
        assert str(missing) in capsys.readouterr().err
        assert not (tmp_path / "x.csv").exists()

    def test_source_required(self, tmp_path):
        assert run("gen-data", "--out", tmp_path / "x.csv") == 2


class TestTrainEval:
    def test_input_width(self, robot_csv, tmp_path):
        for L, width in ((1, 18), (0, 6)):
            out = tmp_path / f"m{L}.model"
            assert run("train", "--data", robot_csv, "--arch", "MLP3", "--L", L, "--epochs", 2, "--out", out) == 0
            model = load_model(out)
            assert model.params.spec.input_dim == width
            assert model.level == L
            rows = list(csv.DictReader(open(f"{out}.loss.csv")))
            assert len(rows) == 2

    def test_eval(self, robot_csv, tmp_path):
        model = tmp_path / "m.model"
        run("train", "--data", robot_csv, "--arch", "MLP3", "--L", 1, "--epochs", 2, "--out", model)
        assert run("eval", "--model", model, "--data", robot_csv, "--out", tmp_path / "e.json") == 0
        res = json.loads((tmp_path / "e.json").read_text())
        assert res["tp"] + res["tn"] + res["fp"] + res["fn"] == 80
        assert 0 <= res["accuracy"] <= 1

    def test_unknown_arch(self, robot_csv, tmp_path, capsys):
        assert run("train", "--data", robot_csv, "--arch", "MLP99", "--out", tmp_path / "m.model") == 2
        assert "MLP3" in capsys.readouterr().err

    def test_width_mismatch_removes_output(self, robot_csv, disc_csv, tmp_path):
        model = tmp_path / "m.model"
        run("train", "--data", disc_csv, "--arch", "MLP3", "--epochs", 1, "--out", model)
        out = tmp_path / "e.json"
        assert run("eval", "--model", model, "--data", robot_csv, "--out", out) == 2
        assert not out.exists()


class TestSweepSliceBench:
    def test_sweep(self, disc_csv, tmp_path):
        out = tmp_path / "s.csv"
        assert run("sweep", "--arch", "MLP3", "--data", disc_csv, "--L-list", "0,1,2,3", "--trials", 1,
                   "--epochs", 1, "--out", out, "--curves-out", tmp_path / "c") == 0
        rows = list(csv.DictReader(open(out)))
        assert [int(r["L"]) for r in rows] == [0, 1, 2, 3]
        assert (tmp_path / "c.L3.csv").exists()

    def test_slice_oracle(self, tmp_path):
        out = tmp_path / "s.ppm"
        assert run("slice", "--oracle", "--desk-arm", "--resolution", 16, "--out", out) == 0
        assert out.read_bytes().startswith(b"P6\n16 16\n255\n")
        assert out.with_suffix(".csv").exists()

    def test_bench(self, tmp_path):
        out = tmp_path / "b.csv"
        assert run("bench", "--models", "oracle,MLP9:1", "--desk-arm", "--queries", 1000,
                   "--repetitions", 5, "--warmup", 5, "--out", out) == 0
        methods = {r["method"] for r in csv.DictReader(open(out))}
        assert "oracle" in methods and len(methods) == 2


class TestReplay:
    def test_reproduces_bytes(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run("gen-data", "--synthetic2d", "--n-per-class", 100, "--seed", 9, "--out", out) == 0
        first = out.read_bytes()
        out.unlink()
        assert run("replay", f"{out}.manifest.json") == 0
        assert out.read_bytes() == first

    def test_missing_manifest(self, tmp_path):
        assert run("replay", tmp_path / "none.json") == 2
