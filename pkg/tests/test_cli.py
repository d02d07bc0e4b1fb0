import json

import numpy as np
import pytest

from poislsm.cli import main
from poislsm.tensorio import read_matrix_csv


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    rc = main(
        [
            "simulate",
            "--n", "20",
            "--T", "3",
            "--k", "2",
            "--seed", "5",
            "--out", str(out),
        ]
    )
    assert rc == 0
    return out


def test_simulate_writes_expected_files(sim_dir):
    for name in ("tensor_manifest.json", "z_star.csv", "alpha_star.csv", "sim_config.json"):
        assert (sim_dir / name).exists()
    with open(sim_dir / "sim_config.json") as fh:
        cfg = json.load(fh)
    assert cfg["n"] == 20 and cfg["T"] == 3 and cfg["seed"] == 5
    assert read_matrix_csv(sim_dir / "z_star.csv").shape == (20, 2)


def test_init_and_fit_and_eval_pipeline(sim_dir, tmp_path):
    manifest = str(sim_dir / "tensor_manifest.json")
    init_dir = tmp_path / "init"
    rc = main(
        ["init", "--tensor", manifest, "--k", "2", "--pgd-max-iters", "150",
         "--out", str(init_dir)]
    )
    assert rc == 0
    assert read_matrix_csv(init_dir / "z_init.csv").shape == (20, 2)
    with open(init_dir / "init_trace.json") as fh:
        trace = json.load(fh)["loglik_trace"]
    assert trace == sorted(trace)

    fit_dir = tmp_path / "fit"
    rc = main(
        ["fit", "--tensor", manifest, "--method", "onestep", "--k", "2",
         "--init-z", str(init_dir / "z_init.csv"),
         "--init-alpha", str(init_dir / "alpha_init.csv"),
         "--out", str(fit_dir)]
    )
    assert rc == 0
    z_hat = read_matrix_csv(fit_dir / "z.csv")
    assert z_hat.shape == (20, 2)
    assert np.max(np.abs(z_hat.sum(axis=0))) < 1e-8

    eval_dir = tmp_path / "eval"
    rc = main(
        ["eval", "--estimate", str(fit_dir / "z.csv"),
         "--truth", str(sim_dir / "z_star.csv"), "--out", str(eval_dir)]
    )
    assert rc == 0
    with open(eval_dir / "metrics.json") as fh:
        metrics = json.load(fh)
    assert metrics["dist_sq"] >= 0.0


def test_fit_pmle_via_cli(sim_dir, tmp_path):
    rc = main(
        ["fit", "--tensor", str(sim_dir / "tensor_manifest.json"), "--method", "pmle",
         "--k", "2", "--lambda-mult", "0.05", "--out", str(tmp_path)]
    )
    assert rc == 0
    assert (tmp_path / "g.csv").exists()
    with open(tmp_path / "report.json") as fh:
        rep = json.load(fh)
    assert rep["method"] == "pmle"


def test_experiment_cli_with_config(tmp_path):
    config = {
        "scenario": "vary_T",
        "grid": [[20, 3]],
        "k_list": [2],
        "estimators": ["onestep"],
        "reps": 2,
        "pgd_max_iters": 150,
    }
    cfg_path = tmp_path / "spec.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / "run"
    rc = main(["experiment", "--config", str(cfg_path), "--master-seed", "1",
               "--out", str(out)])
    assert rc == 0
    assert (out / "results.csv").exists()
    with open(out / "summary.json") as fh:
        summary = json.load(fh)
    assert summary["spec"]["master_seed"] == 1
    assert summary["spec"]["reps"] == 2


def test_ingest_cli(tmp_path):
    trips = tmp_path / "trips.csv"
    trips.write_text(
        "start_id,end_id,start_time,duration_s\n"
        "a,b,100,300\n"
        "b,a,200,400\n"
        "a,a,3605,120\n"
    )
    out = tmp_path / "ingested"
    rc = main(["ingest", "--trips", str(trips), "--window-start", "0",
               "--window-end", "7200", "--out", str(out)])
    assert rc == 0
    with open(out / "node_index.json") as fh:
        index = json.load(fh)
    assert index == {"a": 0, "b": 1}
    with open(out / "ingest_stats.json") as fh:
        stats = json.load(fh)
    assert stats["kept"] == 3


def test_unknown_subcommand_rejected():
    with pytest.raises(SystemExit):
        main(["transmogrify"])
