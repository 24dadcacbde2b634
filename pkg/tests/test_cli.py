import json

import numpy as np
import pytest

from engress.cli import main


def run(argv):
    return main(argv)


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, np.array(rows, dtype=np.float64)


@pytest.fixture()
def sim_file(tmp_path):
    out = tmp_path / "data.csv"
    assert run(["simulate", "--setting", "softplus", "--n", "200",
                "--seed", "7", "--out", str(out)]) == 0
    return out


class TestSimulate:
    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        for path in (a, b):
            assert run(["simulate", "--setting", "softplus", "--n", "100",
                        "--seed", "7", "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_split_fractions(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run(["simulate", "--setting", "log", "--n", "100", "--seed", "1",
                    "--out", str(out), "--split-q", "0.3", "--keep", "smaller"]) == 0
        _, train = read_csv(tmp_path / "d_train.csv")
        _, test = read_csv(tmp_path / "d_test.csv")
        assert abs(train.shape[0] - 30) <= 1
        assert train.shape[0] + test.shape[0] == 100
        assert train[:, 0].max() < test[:, 0].min()

    def test_unknown_setting_exit_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["simulate", "--setting", "nope", "--n", "10",
                 "--out", str(tmp_path / "x.csv")])
        assert exc.value.code == 2

    def test_missing_out_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            run(["simulate", "--setting", "softplus", "--n", "10"])
        assert exc.value.code == 2

    def test_header_row(self, sim_file):
        header, data = read_csv(sim_file)
        assert header == ["x0", "y0"]
        assert data.shape == (200, 2)


class TestFitPredict:
    @pytest.fixture()
    def model_file(self, tmp_path, sim_file):
        model = tmp_path / "model.json"
        rc = run(["fit", "--data", str(sim_file), "--loss", "energy",
                  "--layers", "1", "--hidden", "16", "--noise-dim", "8",
                  "--steps", "60", "--lr", "0.01", "--seed", "3",
                  "--out-model", str(model)])
        assert rc == 0
        return model

    def test_fit_writes_versioned_model(self, model_file):
        payload = json.loads(model_file.read_bytes())
        assert payload["version"] == "1"
        assert payload["kind"] == "engression"
        assert "normalization" in payload

    def test_fit_repeatable(self, tmp_path, sim_file, model_file):
        again = tmp_path / "model2.json"
        run(["fit", "--data", str(sim_file), "--loss", "energy",
             "--layers", "1", "--hidden", "16", "--noise-dim", "8",
             "--steps", "60", "--lr", "0.01", "--seed", "3",
             "--out-model", str(again)])
        assert again.read_bytes() == model_file.read_bytes()

    def test_fit_l2_requires_zero_noise(self, tmp_path, sim_file):
        rc = run(["fit", "--data", str(sim_file), "--loss", "l2",
                  "--steps", "10", "--out-model", str(tmp_path / "m.json")])
        assert rc == 2

    def test_fit_l2_baseline_kind(self, tmp_path, sim_file):
        model = tmp_path / "m.json"
        rc = run(["fit", "--data", str(sim_file), "--loss", "l2",
                  "--noise-dim", "0", "--layers", "1", "--hidden", "8",
                  "--steps", "20", "--out-model", str(model)])
        assert rc == 0
        assert json.loads(model.read_bytes())["kind"] == "nn_l2"

    def test_fit_bad_cell_names_location(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x0,y0\n1.0,2.0\n1.5,oops\n")
        rc = run(["fit", "--data", str(bad), "--steps", "5",
                  "--out-model", str(tmp_path / "m.json")])
        assert rc == 2
        err = capsys.readouterr().err
        assert "y0" in err and ":3" in err

    def test_predict_sample_columns(self, tmp_path, sim_file, model_file):
        out = tmp_path / "draws.csv"
        rc = run(["predict", "--model", str(model_file), "--data", str(sim_file),
                  "--type", "sample", "--nsample", "100", "--seed", "1",
                  "--out", str(out)])
        assert rc == 0
        header, data = read_csv(out)
        assert len(header) == 100
        assert header[0] == "sample_0"

    def test_predict_interval_columns(self, tmp_path, model_file):
        xs = tmp_path / "xs.csv"
        xs.write_text("x0\n" + "\n".join(str(v) for v in np.linspace(-2, 2, 20)) + "\n")
        out = tmp_path / "iv.csv"
        rc = run(["predict", "--model", str(model_file), "--data", str(xs),
                  "--type", "interval", "--nsample", "64", "--seed", "2",
                  "--out", str(out)])
        assert rc == 0
        header, data = read_csv(out)
        assert header == ["lower", "upper"]
        assert np.all(data[:, 0] <= data[:, 1])

    def test_predict_quantile_headers(self, tmp_path, model_file):
        xs = tmp_path / "xs.csv"
        xs.write_text("x0\n0.0\n1.0\n")
        out = tmp_path / "q.csv"
        rc = run(["predict", "--model", str(model_file), "--data", str(xs),
                  "--type", "quantile", "--quantiles", "0.1,0.5,0.9",
                  "--nsample", "64", "--seed", "2", "--out", str(out)])
        assert rc == 0
        header, _ = read_csv(out)
        assert header == ["q_0.1", "q_0.5", "q_0.9"]

    def test_predict_dim_mismatch_exit_2(self, tmp_path, model_file):
        xs = tmp_path / "xs2.csv"
        xs.write_text("x0,x1\n0.0,1.0\n")
        rc = run(["predict", "--model", str(model_file), "--data", str(xs),
                  "--type", "mean", "--out", str(tmp_path / "o.csv")])
        assert rc == 2


class TestEval:
    def test_zero_losses_on_identical(self, tmp_path):
        truth = tmp_path / "truth.csv"
        truth.write_text("x0,y0\n0.0,1.0\n1.0,2.0\n")
        pred = tmp_path / "pred.csv"
        pred.write_text("mean0\n1.0\n2.0\n")
        rc = run(["eval", "--pred", str(pred), "--truth", str(truth),
                  "--metrics", "l1,l2"])
        assert rc == 0

    def test_coverage_metric(self, tmp_path, capsys):
        truth = tmp_path / "t.csv"
        truth.write_text("y0\n0.0\n1.0\n5.0\n")
        pred = tmp_path / "p.csv"
        pred.write_text("lower,upper\n-1.0,1.0\n0.0,2.0\n-1.0,1.0\n")
        rc = run(["eval", "--pred", str(pred), "--truth", str(truth),
                  "--metrics", "coverage"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "coverage,all,0.6666666666666666" in out

    def test_region_rows(self, tmp_path, capsys):
        truth = tmp_path / "t.csv"
        truth.write_text("x0,y0\n0.0,1.0\n2.5,1.0\n5.0,1.0\n")
        pred = tmp_path / "p.csv"
        pred.write_text("mean0\n1.0\n1.5\n1.0\n")
        rc = run(["eval", "--pred", str(pred), "--truth", str(truth),
                  "--metrics", "l1", "--regions", "2.0,1.0"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "l1,in," in out and "l1,band," in out and "l1,out," in out


class TestOracle:
    def test_gains_row(self, capsys):
        rc = run(["oracle", "gains", "--family", "median", "--lip", "1",
                  "--eta-max", "2", "--delta", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "3.0,1.0,3.0,2.0" in out

    def test_mean_gain_uniform(self, capsys):
        rc = run(["oracle", "gains", "--family", "mean", "--lip", "1",
                  "--eta-max", "2", "--noise", "uniform", "--delta", "1"])
        assert rc == 0
        out = capsys.readouterr().out.strip().split("\n")[-1]
        vals = [float(v) for v in out.split(",")]
        assert vals[1] == pytest.approx(0.125, abs=1e-9)
        assert vals[3] == pytest.approx(0.875, abs=1e-9)

    def test_quadratic(self, capsys):
        rc = run(["oracle", "quadratic", "--beta", "0,1,1", "--x", "2",
                  "--noise", "uniform", "--eta-max", "1", "--alpha", "0.5"])
        assert rc == 0
        out = capsys.readouterr().out
        assert f"mean,{19.0 / 3.0!r}" in out

    def test_bounds(self, capsys):
        rc = run(["oracle", "bounds", "--support-length", "1",
                  "--confidence", "0.05", "--n", "100"])
        assert rc == 0
        assert "cramer_bound,0.018444" in capsys.readouterr().out


class TestBenchmarkCommand:
    def test_smoke_and_reports(self, tmp_path):
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps(
            [{"num_layers": 1, "hidden_dim": 16, "lr": 0.01, "steps": 40}]
        ))
        report = tmp_path / "rep.json"
        rc = run(["benchmark", "--setting", "softplus", "--methods", "engression",
                  "--reps", "1", "--n", "200", "--n-test", "150",
                  "--grid", str(grid), "--nsample", "16",
                  "--seed", "5", "--out-report", str(report)])
        assert rc == 0
        assert report.exists() and (tmp_path / "rep.csv").exists()
        payload = json.loads(report.read_bytes())
        assert payload["setting"] == "softplus"

    def test_unknown_grid_keys_rejected(self, tmp_path):
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps([{"layers": 1}]))
        rc = run(["benchmark", "--setting", "softplus", "--methods", "engression",
                  "--reps", "1", "--grid", str(grid),
                  "--out-report", str(tmp_path / "r.json")])
        assert rc == 2
