import numpy as np
import pytest

from litenet import artifact
from litenet.cli import main
from litenet.config import load_config
from litenet.errors import ParseError
from litenet.market_data import Bar, BarSeries, bars_to_csv, make_windows
from litenet.mutual_info import format_selection
from litenet.net import fused_forward, predict_windows
from litenet.pipeline import feature_matrix, initial_selection, load_bars, predict_bars, prepare, run_pipeline

CFG = """\
[data]
n_bars = 1200
[train]
epochs = 2
prune_schedule = 1
[run]
seed = 5
"""


class TestArtifact:
    def test_round_trip_predictions(self, small_run):
        model = small_run.model
        text = artifact.dumps(model)
        back = artifact.loads(text)
        wins = small_run.test_inputs()
        a = np.array([fused_forward(x, model) for x in wins])
        b = np.array([fused_forward(x, back) for x in wins])
        assert a.tobytes() == b.tobytes()
        assert artifact.dumps(back) == text

    def test_fields_preserved(self, small_run):
        model = small_run.model
        back = artifact.loads(artifact.dumps(model))
        assert back.window == model.window
        assert back.input_columns == model.input_columns
        assert back.selection == model.selection
        assert back.meta == model.meta
        for m, n in zip(model.modules, back.modules):
            np.testing.assert_array_equal(m.mask, n.mask)

    def test_file_round_trip(self, small_run, tmp_path):
        path = tmp_path / "m.ln"
        artifact.save_model(small_run.model, path)
        assert path.read_text().splitlines()[0] == artifact.FORMAT_TAG
        assert artifact.dumps(artifact.load_model(path)) == path.read_text()

    def test_bad_artifacts(self):
        with pytest.raises(ParseError):
            artifact.loads("something-else\n")
        with pytest.raises(ParseError):
            artifact.loads("litenet-v1\nwindow = 3\n")
        with pytest.raises(ParseError, match="line 2"):
            artifact.loads("litenet-v1\nno separator here\n")


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "c.cfg").write_text(CFG)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


class TestCli:
    def test_synth_deterministic(self, workdir):
        a, b = workdir / "a.csv", workdir / "b.csv"
        assert run("synth", "--config", workdir / "c.cfg", "--out", a) == 0
        assert run("synth", "--config", workdir / "c.cfg", "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()
        assert len(a.read_text().splitlines()) == 1201

    def test_train_predict_bench(self, workdir, capsys):
        cfg_path, data, model = workdir / "c.cfg", workdir / "d.csv", workdir / "m.ln"
        assert run("synth", "--config", cfg_path, "--out", data) == 0
        assert run("train", "--config", cfg_path, "--data", data, "--out", model, "--metrics-out", workdir / "m.txt") == 0
        assert model.exists() and (workdir / "m.txt").read_text().startswith("split=test")
        capsys.readouterr()

        assert run("predict", "--model", model, "--data", data) == 0
        lines = capsys.readouterr().out.splitlines()
        cfg = load_config(CFG)
        bars = load_bars(cfg, data)
        n_windows = len(make_windows(feature_matrix(cfg, bars), cfg["features.window"]))
        assert len(lines) == n_windows

        # thin adapter: same numbers as the library path
        direct = run_pipeline(cfg, bars)
        assert artifact.dumps(direct.model) == model.read_text()
        expect = predict_bars(direct.model, bars)
        assert np.array([float(v) for v in lines]).tobytes() == expect.tobytes()

        assert run("predict", "--model", model, "--data", data, "--out", workdir / "p.txt") == 0
        assert (workdir / "p.txt").read_text().splitlines() == lines

        capsys.readouterr()
        assert run("bench", "--model", model, "--data", data, "--reps", 0) == 1
        assert "reps" in capsys.readouterr().err
        assert run("bench", "--model", model, "--data", data, "--reps", 50, "--warmup", 5, "--out", workdir / "b.json") == 0
        assert "kind=latency" in capsys.readouterr().out
        assert run("bench", "--model", model, "--data", data, "--reps", 50, "--mode", "execution") == 0
        assert "kind=execution" in capsys.readouterr().out

    def test_select_matches_library(self, workdir, capsys):
        assert run("select", "--config", workdir / "c.cfg") == 0
        cfg = load_config(CFG)
        expect = format_selection(initial_selection(cfg, prepare(cfg, load_bars(cfg))))
        assert capsys.readouterr().out == expect

    def test_acf(self, workdir, capsys):
        assert run("acf", "--config", workdir / "c.cfg", "--max-lag", 5, "--series", "returns") == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("# acf series=returns")
        assert out[2] == "0 1.000000"
        assert len(out) == 8

    def test_sweep(self, workdir, capsys):
        code = run("sweep", "--config", workdir / "c.cfg", "--axis", "threshold", "--values", "0,0.05", "--bench-reps", 5)
        assert code == 0
        assert len(capsys.readouterr().out.splitlines()) == 3
        assert run("sweep", "--config", workdir / "c.cfg", "--axis", "window", "--values", "a,b") == 1

    def test_usage_errors(self, capsys):
        assert run() == 1
        assert run("frobnicate") == 1
        assert run("synth", "--bogus") == 1
        assert capsys.readouterr().err

    def test_data_errors(self, workdir, capsys):
        assert run("select", "--data", workdir / "missing.csv") == 2
        bad = workdir / "bad.csv"
        bad.write_text("timestamp,open,high,low,close,volume\n1,1,0.5,1,1,10\n")
        assert run("select", "--data", bad) == 2
        cfg = workdir / "bad.cfg"
        cfg.write_text("[train]\nepochs = -1\n")
        assert run("synth", "--config", cfg) == 2
        assert run("predict", "--model", workdir / "c.cfg") == 2
        assert capsys.readouterr().err.count("litenet ") >= 4

    def test_degenerate_exit(self, workdir, capsys):
        flat = BarSeries.from_bars([Bar(1_000_000 * (i + 1), 10.0, 10.0, 10.0, 10.0, 100.0) for i in range(600)])
        path = workdir / "flat.csv"
        path.write_text(bars_to_csv(flat))
        assert run("select", "--data", path) == 3
        assert capsys.readouterr().err
