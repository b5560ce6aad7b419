import json

import numpy as np
import pytest

from sensr import cli, data, demo


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    data.make_toy(seed=0, n_major=200, n_minor=40).save_csv(d / "train.csv")
    demo.toy_metric().save(d / "metric.json")
    cfg = {
        "seed": 0,
        "arch": {"arch": "logistic"},
        "train": {"epochs": 40, "batch_size": 40, "epsilon": 0.05, "lambda_step": 1.0, "theta_step": 0.01,
                  "attack": {"subspace_step": 0.5, "subspace_epochs": 5, "full_step": 0.01, "full_epochs": 5}},
        "audit": {"epsilon": 0.05, "batch_size": 40, "max_iters": 10,
                  "attack": {"subspace_step": 0.5, "subspace_epochs": 5, "full_step": 0.01, "full_epochs": 5}},
        "data": {"path": "train.csv"},
        "metric": "metric.json",
        "eval": {"attributes": ["group"]},
    }
    (d / "cfg.json").write_text(json.dumps(cfg))
    return d


def test_parse_run_config_resolves_paths(toy_files):
    cfg = cli.parse_run_config(toy_files / "cfg.json")
    assert cfg.data.path == str(toy_files / "train.csv")
    assert cfg.train.attack.subspace_epochs == 5 and cfg.arch.arch == "logistic"


@pytest.mark.parametrize("body,match", [
    ({"extra": 1}, "unknown key"),
    ({"train": {"attack": {"steps": 1}}}, "train.attack: unknown key"),
    ({"train": {"epochs": -1}}, "epochs"),
    ({"metric": "missing.json"}, "does not exist"),
    ({"seed": "zero"}, "integer"),
])
def test_bad_configs(tmp_path, body, match):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(body))
    with pytest.raises(cli.ConfigError, match=match):
        cli.parse_run_config(p)


def test_train_audit_eval_roundtrip(toy_files, tmp_path, capsys):
    cfg = str(toy_files / "cfg.json")
    assert cli.main(["train", "--config", cfg, "--mode", "sensr", "--out-dir", str(tmp_path)]) == 0
    ckpt = tmp_path / "checkpoint.json"
    assert ckpt.exists() and (tmp_path / "train_log.csv").exists()
    assert cli.main(["audit", "--config", cfg, "--model", str(ckpt), "--out-dir", str(tmp_path),
                     "--csv", "per.csv"]) == 0
    rep = json.loads((tmp_path / "audit.json").read_text())
    assert rep["certificate_gap"] >= 0
    assert (tmp_path / "per.csv").read_text().count("\n") == 241
    assert cli.main(["eval", "--config", cfg, "--model", str(ckpt), "--out-dir", str(tmp_path)]) == 0
    ev = json.loads((tmp_path / "eval.json").read_text())
    assert 0.5 < ev["balanced_accuracy"] <= 1.0
    assert "B-Acc" in capsys.readouterr().out


def test_train_is_bit_identical(toy_files, tmp_path):
    cfg = str(toy_files / "cfg.json")
    for run in ("a", "b"):
        assert cli.main(["train", "--config", cfg, "--threads", "1", "--out-dir", str(tmp_path / run)]) == 0
    for f in ("checkpoint.json", "train_log.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_flag_overrides_config(toy_files, tmp_path):
    cfg = str(toy_files / "cfg.json")
    cli.main(["train", "--config", cfg, "--mode", "baseline", "--out-dir", str(tmp_path / "a")])
    cli.main(["train", "--config", cfg, "--mode", "baseline", "--seed", "5", "--out-dir", str(tmp_path / "b")])
    assert (tmp_path / "a/checkpoint.json").read_bytes() != (tmp_path / "b/checkpoint.json").read_bytes()


def test_exit_codes(toy_files, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nope": 1}')
    assert cli.main(["train", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["train", "--mode", "baseline", "--data", str(tmp_path / "missing.csv")]) == cli.EXIT_IO
    assert cli.main(["train", "--mode", "sensr", "--data", str(toy_files / "train.csv")]) == cli.EXIT_CONFIG
    assert cli.main(["demo-toy", "--epochs", "-1", "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG


def test_divergence_exit_code(tmp_path):
    ds = data.make_toy(seed=0, n_major=50, n_minor=10)
    ds.with_features(ds.features * 1e307).save_csv(tmp_path / "huge.csv")
    (tmp_path / "cfg.json").write_text(json.dumps({
        "arch": {"arch": "logistic"},
        "train": {"epochs": 300, "batch_size": 20, "theta_step": 1.0, "checkpoint_every": 1},
    }))
    with np.errstate(all="ignore"):
        code = cli.main(["train", "--config", str(tmp_path / "cfg.json"), "--mode", "baseline",
                         "--data", str(tmp_path / "huge.csv"), "--out-dir", str(tmp_path)])
    assert code == cli.EXIT_DIVERGED
    assert (tmp_path / "last_good.json").exists()


def test_metric_softmax_and_factor(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 3))
    s = (X[:, 0] > 0).astype(int)
    ds = data.TabularDataset(X, rng.integers(0, 2, 300), {"s": s})
    ds.save_csv(tmp_path / "d.csv")
    assert cli.main(["metric", "--mode", "softmax", "--data", str(tmp_path / "d.csv"), "--protected", "s",
                     "--epochs", "200", "--axes", "x2", "--out-dir", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "metric.json").read_text())
    assert np.asarray(m["basis"]).shape == (3, 2)

    (tmp_path / "groups.json").write_text(json.dumps([[0, 1, 2], [3, 4, 5]]))
    assert cli.main(["metric", "--mode", "factor", "--data", str(tmp_path / "d.csv"), "--groups",
                     str(tmp_path / "groups.json"), "--k", "1", "--out", "f.json",
                     "--out-dir", str(tmp_path)]) == 0
    assert np.asarray(json.loads((tmp_path / "f.json").read_text())["basis"]).shape == (3, 1)


def test_demo_zero_epochs(tmp_path):
    assert cli.main(["demo-toy", "--epochs", "0", "--out-dir", str(tmp_path)]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"baseline.json", "sensr.json", "audit_baseline.json", "audit_sensr.json", "toy_train.csv",
            "baseline_heatmap.png", "unfair_map.png", "sensr_heatmap.png", "summary.json"} <= names
    s = json.loads((tmp_path / "summary.json").read_text())
    # untrained models coincide
    assert s["models"]["baseline"]["certificate_gap"] == s["models"]["sensr"]["certificate_gap"]
