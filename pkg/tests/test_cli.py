import json

import numpy as np
import pytest

from clipdsm.cli import EXIT_CONFIG, EXIT_DATA, EXIT_SCHEDULE, main
from clipdsm.harness.config import desk_preset
from clipdsm.harness.idx import write_idx_images


@pytest.fixture
def cfg_file(tmp_path):
    cfg = desk_preset()
    cfg.problem.n, cfg.problem.n_agents, cfg.problem.m = 9, 3, 9
    cfg.topology.n_agents = 3
    cfg.run.rounds = 30
    cfg.run.moreau_every = 10
    path = tmp_path / "cfg.yaml"
    cfg.save(path)
    return path


def test_run_prints_final_row(cfg_file, tmp_path, capsys):
    assert main(["run", "--config", str(cfg_file), "--seed", "2", "--out", str(tmp_path / "r")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("k,alpha_k,tau_k")
    assert lines[1].split(",")[0] == "30"
    assert json.loads((tmp_path / "r" / "meta.json").read_text())["seed"] == 2


def test_run_rejected_schedule(cfg_file, tmp_path, capsys):
    text = cfg_file.read_text().replace("clip_exponent: 0.4", "clip_exponent: 0.0")
    cfg_file.write_text(text)
    assert main(["run", "--config", str(cfg_file), "--out", str(tmp_path / "r")]) == EXIT_SCHEDULE
    assert "tau_increasing_unbounded" in capsys.readouterr().err
    assert main(["run", "--config", str(cfg_file), "--out", str(tmp_path / "r"), "--override"]) == 0


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("run:\n  roundz: 3\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert "roundz" in capsys.readouterr().err


def test_compare(cfg_file, tmp_path, capsys):
    code = main(["compare", "--config", str(cfg_file), "--methods", "clipped,dpsm", "--seeds", "2", "--out", str(tmp_path / "c")])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "method,final_f,final_moreau,final_recovery"
    assert {l.split(",")[0] for l in out[1:]} == {"clipped", "dpsm"}
    assert (tmp_path / "c" / "summary.csv").exists()


def test_compare_unknown_method(cfg_file, tmp_path):
    assert main(["compare", "--config", str(cfg_file), "--methods", "adam", "--out", str(tmp_path / "c")]) == EXIT_CONFIG


def test_noise_study(cfg_file, tmp_path, capsys):
    assert main(["noise-study", "--config", str(cfg_file), "--draws", "500", "--out", str(tmp_path / "n")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "hill,reference_hill,n_draws"
    assert (tmp_path / "n" / "fig1.svg").exists()


def test_reproduce_synthetic(tmp_path, capsys):
    assert main(["reproduce", "--preset", "fig3", "--synthetic", "--rounds", "20", "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "fig3_objective.csv").exists()
    assert (tmp_path / "f" / "meta.json").exists()


def test_reproduce_missing_mnist(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CLIPDSM_DATA_DIR", str(tmp_path / "empty"))
    assert main(["reproduce", "--preset", "fig2", "--out", str(tmp_path / "f")]) == EXIT_DATA
    err = capsys.readouterr().err
    assert "train-images-idx3-ubyte" in err
    assert "--synthetic" in err


def test_reproduce_with_mnist_flag(tmp_path):
    imgs = np.random.default_rng(1).integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    write_idx_images(tmp_path / "imgs", imgs)
    code = main(["reproduce", "--preset", "fig3", "--mnist", str(tmp_path / "imgs"), "--rounds", "10", "--out", str(tmp_path / "f")])
    assert code == 0


def test_unknown_preset(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["reproduce", "--preset", "fig9", "--out", str(tmp_path)])
    assert e.value.code == 2


def test_validate_config(cfg_file, capsys):
    assert main(["validate-config", "--config", str(cfg_file)]) == 0
    out = capsys.readouterr().out
    assert "schedule_accepted: true" in out
    assert "rho_hat" in out


def test_validate_config_rejects(cfg_file, capsys):
    cfg_file.write_text(cfg_file.read_text().replace("clip_exponent: 0.4", "clip_exponent: 0.6"))
    assert main(["validate-config", "--config", str(cfg_file)]) == 1
    assert "schedule_accepted: false" in capsys.readouterr().out
