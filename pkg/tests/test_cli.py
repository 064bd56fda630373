import json
import os

import numpy as np
import pytest

from pmflow import objectives as obj
from pmflow import train as tr
from pmflow.cli import main
from pmflow.contours import Partition
from pmflow.presets import square_spline_architecture


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    return str(d)


@pytest.fixture(scope="module")
def train_config_path(workdir):
    cfg = tr.TrainConfig(
        objective=obj.ObjectiveConfig(kind="ML", partition=Partition.singletons(2)),
        architecture=square_spline_architecture(2, n_coupling=2, hidden=8, n_blocks=1, n_bins=4),
        learning_rate=2e-3,
        batch_size=128,
        epochs=1,
        eval_interval=5,
        eval_points=128,
        seed=0,
    )
    path = os.path.join(workdir, "config.json")
    with open(path, "w") as fh:
        json.dump(cfg.to_json(), fh)
    return path


@pytest.fixture(scope="module")
def trained(workdir, train_config_path):
    data = os.path.join(workdir, "d.csv")
    assert main(["gen-data", "--name", "moons", "--n", "1500", "--seed", "7",
                 "--out", data]) == 0
    out = os.path.join(workdir, "run")
    assert main(["train", "--config", train_config_path, "--data", data,
                 "--out", out]) == 0
    return {"data": data, "ckpt": os.path.join(out, "checkpoint.ckpt"),
            "out": out}


class TestGenData:
    def test_writes_csv_and_manifest(self, workdir):
        out = os.path.join(workdir, "g.csv")
        assert main(["gen-data", "--name", "grid", "--n", "100", "--seed", "1",
                     "--out", out]) == 0
        assert os.path.exists(out)
        assert os.path.exists(out + ".manifest.json")

    def test_split_mode(self, workdir):
        stem = os.path.join(workdir, "s.csv")
        assert main(["gen-data", "--name", "circles", "--n", "100", "--seed", "1",
                     "--train-frac", "0.7", "--out", stem]) == 0
        assert os.path.exists(os.path.join(workdir, "s_train.csv"))
        assert os.path.exists(os.path.join(workdir, "s_test.csv"))

    def test_idempotent_bytes(self, workdir):
        a = os.path.join(workdir, "a.csv")
        b = os.path.join(workdir, "b.csv")
        for out in (a, b):
            assert main(["gen-data", "--name", "swirl", "--n", "200", "--seed", "9",
                         "--out", out]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_vardim_clean_out(self, workdir):
        out = os.path.join(workdir, "v.csv")
        clean = os.path.join(workdir, "v_clean.csv")
        assert main(["gen-data", "--name", "vardim3d", "--n", "200", "--seed", "2",
                     "--out", out, "--clean-out", clean]) == 0
        header = open(clean).readline().strip().split(",")
        assert header == ["x1", "x2", "x3", "true_logpdf", "true_rank"]


class TestTrainedPipeline:
    def test_metrics_monotone_steps(self, trained):
        lines = open(os.path.join(trained["out"], "metrics.csv")).read().splitlines()
        assert lines[0] == "step,nll,I_P,Ihat_P,wall_time"
        steps = [int(l.split(",")[0]) for l in lines[1:]]
        assert steps == sorted(steps) and len(steps) >= 2

    def test_run_manifest(self, trained):
        manifest = json.load(open(os.path.join(trained["out"], "run.json")))
        assert set(manifest) >= {"config_hash", "seed", "steps", "version", "wall_time_s"}

    def test_eval_command(self, trained, workdir):
        out = os.path.join(workdir, "eval.json")
        assert main(["eval", "--ckpt", trained["ckpt"], "--data", trained["data"],
                     "--max-points", "256", "--out", out]) == 0
        res = json.load(open(out))
        assert np.isfinite(res["nll"]) and np.isfinite(res["I_P"])

    def test_sample_command(self, trained, workdir):
        out = os.path.join(workdir, "samples.csv")
        assert main(["sample", "--ckpt", trained["ckpt"], "--n", "50",
                     "--seed", "3", "--out", out]) == 0
        rows = open(out).read().splitlines()
        assert rows[0] == "x1,x2" and len(rows) == 51

    def test_report_contours(self, trained, workdir):
        out = os.path.join(workdir, "report.json")
        lines = os.path.join(workdir, "lines.csv")
        assert main(["report-contours", "--ckpt", trained["ckpt"], "--data",
                     trained["data"], "--max-points", "4", "--out", out,
                     "--lines-out", lines, "--n-lines", "3",
                     "--line-points", "20"]) == 0
        reports = json.load(open(out))
        assert len(reports) == 4
        for rep in reports:
            assert rep["logpx"] == pytest.approx(sum(rep["L_k"]) + rep["I_P"], abs=1e-8)
        header = open(lines).readline().strip().split(",")
        assert header == ["block_id", "line_id", "t", "x1", "x2"]

    def test_trace_command(self, trained, workdir):
        out = os.path.join(workdir, "trace.csv")
        assert main(["trace", "--ckpt", trained["ckpt"], "--start", "0.5,0.2",
                     "--block", "0", "--t-max", "0.2", "--step", "0.02",
                     "--out", out]) == 0
        header = open(out).readline().strip().split(",")
        assert header == ["t", "x1", "x2", "z1", "z2", "tangent_cos"]

    def test_similarity_command(self, trained, workdir):
        out = os.path.join(workdir, "sim.csv")
        assert main(["similarity", "--ckpt", trained["ckpt"], "--data",
                     trained["data"], "--max-points", "32", "--out", out]) == 0
        mat = np.loadtxt(out, delimiter=",", skiprows=1)
        assert mat.shape == (2, 2)
        assert np.all(mat >= 0) and np.all(mat <= 1 + 1e-12)

    def test_manifold_density_command(self, trained, workdir):
        out = os.path.join(workdir, "dens.csv")
        assert main(["manifold-density", "--ckpt", trained["ckpt"], "--data",
                     trained["data"], "--epsilon", "0.01", "--out", out]) == 0
        header = open(out).readline().strip().split(",")
        assert header[:4] == ["x1", "x2", "log_pm", "predicted_rank"]


class TestErrors:
    def test_missing_checkpoint(self, workdir):
        code = main(["eval", "--ckpt", os.path.join(workdir, "none.ckpt"),
                     "--data", os.path.join(workdir, "d.csv")])
        assert code == 3

    def test_malformed_config(self, workdir, trained):
        bad = os.path.join(workdir, "bad.json")
        open(bad, "w").write("{not json")
        assert main(["train", "--config", bad, "--data", trained["data"],
                     "--out", workdir]) == 3

    def test_unknown_dataset_name(self, workdir):
        with pytest.raises(SystemExit) as exc:
            main(["gen-data", "--name", "unknown", "--n", "10",
                  "--out", os.path.join(workdir, "x.csv")])
        assert exc.value.code == 2


class TestCookbookCheck:
    def test_audit_passes_and_writes(self, workdir):
        out = os.path.join(workdir, "audit.json")
        assert main(["cookbook-check", "--trials", "150", "--max-dim", "6",
                     "--seed", "0", "--out", out]) == 0
        payload = json.load(open(out))
        assert payload["max_violation"] <= 1e-8
        assert payload["wall_time_s"] < 60
