import json

from cograph.cli import main


def run_cli(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr().out
    return rc, out


def gen_dataset(capsys, tmp_path, **kw):
    data = tmp_path / "data"
    args = [
        "--seed", "3", "--out", str(data), "gen-synthetic",
        "--nodes", str(kw.get("nodes", 150)),
        "--classes", "3",
        "--p-in", "0.12",
        "--p-out", "0.02",
        "--feature-dim", "24",
        "--feature-noise", "0.1",
    ]
    rc, out = run_cli(capsys, *args)
    assert rc == 0
    return data


def test_gen_synthetic_writes_dataset(capsys, tmp_path):
    data = gen_dataset(capsys, tmp_path)
    assert (data / "edges.tsv").exists()
    assert (data / "features.csv").exists()
    assert (data / "labels.csv").exists()
    assert (data / "meta.json").exists()


def test_train_subcommand(capsys, tmp_path):
    data = gen_dataset(capsys, tmp_path)
    rc, out = run_cli(
        capsys, "--seed", "0", "--out", str(tmp_path / "run"), "train",
        "--data", str(data), "--model", "gcn", "--epochs", "50",
    )
    assert rc == 0
    metrics = json.loads(out)
    assert 0.0 <= metrics["test_accuracy"] <= 1.0
    assert (tmp_path / "run" / "checkpoint.csv").exists()
    assert (tmp_path / "run" / "metrics.json").exists()


def test_cotrain_subcommand(capsys, tmp_path):
    data = gen_dataset(capsys, tmp_path)
    rc, out = run_cli(
        capsys, "--seed", "0", "--out", str(tmp_path / "ct"), "cotrain",
        "--data", str(data), "--struct", "gcn", "--feat", "f-mlp",
        "--n-add", "8", "--max-iters", "1", "--epochs", "50",
    )
    assert rc == 0
    metrics = json.loads(out)
    assert metrics["iterations"] == 1
    history = (tmp_path / "ct" / "history.jsonl").read_text().strip().splitlines()
    assert len(history) == 2
    assert json.loads(history[0])["iter"] == 0


def test_attack_subcommand_writes_sidecar(capsys, tmp_path):
    data = gen_dataset(capsys, tmp_path)
    out_dir = tmp_path / "pert"
    rc, out = run_cli(
        capsys, "--seed", "1", "--out", str(out_dir), "attack",
        "--data", str(data), "--method", "dice", "--rate", "0.1",
    )
    assert rc == 0
    sidecar = json.loads((out_dir / "perturbation.json").read_text())
    assert sidecar["method"] == "dice"
    assert len(sidecar["flip_log_hash"]) == 64


def test_calibrate_subcommand(capsys, tmp_path):
    data = gen_dataset(capsys, tmp_path)
    rc, out = run_cli(
        capsys, "--seed", "0", "--out", str(tmp_path / "cal"), "calibrate",
        "--data", str(data), "--model", "gcn", "--epochs", "50",
    )
    assert rc == 0
    metrics = json.loads(out)
    assert metrics["temperature"] > 0
    assert metrics["val_nll_after"] <= metrics["val_nll_before"] + 1e-12
    csv = (tmp_path / "cal" / "reliability.csv").read_text().splitlines()
    assert csv[0] == "split,phase,bin_low,bin_high,count,confidence,accuracy"


def test_experiment_subcommand(capsys, tmp_path):
    config = {
        "synthetic": dict(n=120, C=3, p_in=0.15, p_out=0.02, m=24, feature_noise=0.1, seed=5),
        "seeds": [0],
        "struct_model": {"kind": "gcn", "hyper": {"epochs": 40}},
        "feat_model": {"kind": "f-mlp", "hyper": {"epochs": 40}},
        "n_add": 5,
        "max_iters": 1,
        "out_dir": str(tmp_path / "exp"),
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    rc, out = run_cli(capsys, "--config", str(cfg_path), "experiment")
    assert rc == 0
    assert (tmp_path / "exp" / "summary.json").exists()


def test_validation_error_exits_2(capsys, tmp_path):
    rc = main(["train", "--data", str(tmp_path / "nope"), "--model", "gcn"])
    assert rc == 2


def test_bad_config_exits_2(capsys, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    rc = main(["--config", str(cfg), "experiment"])
    assert rc == 2


def test_missing_config_exits_2(capsys):
    rc = main(["experiment"])
    assert rc == 2


def test_experiment_with_failing_cells_exits_1(capsys, tmp_path):
    config = {
        "synthetic": dict(n=60, C=2, p_in=0.2, p_out=0.05, m=8, feature_noise=0.1, seed=5),
        "seeds": [0],
        "struct_model": {"kind": "gcn", "hyper": {"epochs": 10}},
        "feat_model": {"kind": "f-mlp", "hyper": {"epochs": 10}},
        "n_add": 2,
        "max_iters": 0,
        "attacks": [{"name": "bad", "method": "external", "path": "does-not-exist.tsv"}],
        "out_dir": str(tmp_path / "out"),
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    rc = main(["--config", str(cfg_path), "experiment"])
    assert rc == 1  # cells failed at runtime; report still written
    assert (tmp_path / "out" / "summary.json").exists()
