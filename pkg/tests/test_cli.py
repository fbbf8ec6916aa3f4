import filecmp
import json

import pytest
import yaml

from geomews import __version__
from geomews.cli import main
from geomews.config import ConfigError, config_hash, expand, load_config


def write_cfg(tmp_path, data):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(data))
    return str(p)


SMALL = {"grid": {"n": 41}, "sweep": {"sigma": [0.01, 0.015, 0.02]}}


def test_schlogl_command_is_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["-o", str(tmp_path / d), "schlogl"]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert sorted(cmp.common_files) == ["schlogl.csv", "schlogl.json"]
    assert not cmp.diff_files
    data = json.loads((tmp_path / "a" / "schlogl.json").read_text())
    assert data["header"]["version"] == __version__
    assert data["header"]["command"] == "schlogl"
    assert data["rel_err"] < 0.05


def test_csv_headers_carry_provenance(tmp_path):
    assert main(["-o", str(tmp_path), "--seed", "9", "equilibria", "--b1", "2.1", "2.3"]) == 0
    lines = (tmp_path / "equilibria.csv").read_text().splitlines()
    assert lines[0] == "# tool: geomews"
    assert "# seed: 9" in lines[:6]
    assert any(line.startswith("# config_hash: ") for line in lines[:6])
    assert lines[5] == "b1,T,u,stability,eig1_re,eig2_re"
    assert len(lines) == 6 + 6


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"grid": {"nn": 3}})
    assert main(["-c", cfg, "-o", str(tmp_path / "o"), "schlogl"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and "grid.nn" in err["message"]


def test_bad_arguments_are_config_errors(tmp_path):
    assert main(["-o", str(tmp_path), "nonsense"]) == 2
    assert main(["-o", str(tmp_path), "--jobs", "0", "schlogl"]) == 2
    assert main(["-c", str(tmp_path / "missing.yaml"), "schlogl"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid: [unclosed")
    assert main(["-c", str(bad), "-o", str(tmp_path), "schlogl"]) == 2
    assert json.loads((tmp_path / "error.json").read_text())["exit_code"] == 2


def test_numerical_failure_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["-c", cfg, "-o", str(tmp_path / "o"), "separatrix", "--b1", "1.9"]) == 3
    assert json.loads((tmp_path / "o" / "error.json").read_text())["error"] == "numerical"


def test_no_transitions_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "mc": {"t_max": 0.1, "n_traj": 2}})
    assert main(["-c", cfg, "-o", str(tmp_path / "o"), "scaling"]) == 4


def test_scaling_command_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "mc": {"t_max": 2000.0, "n_traj": 4,
                                               "sigma": [0.02]}})
    assert main(["-c", cfg, "-o", str(tmp_path / "o"), "scaling"]) == 0
    out = tmp_path / "o"
    assert (out / "passage_times_sigma=0.02.csv").exists()
    rep = json.loads((out / "scaling.json").read_text())["report"]
    assert set(rep) >= {"c2_fit", "c2_pred", "rel_err", "r2_iii", "sigma_max"}


def test_cache_reuse_gives_identical_output(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    cache = str(tmp_path / "cache")
    for d in ("a", "b"):
        assert main(["-c", cfg, "-o", str(tmp_path / d), "--cache", cache, "separatrix",
                     "--sigma", "0.01"]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert cmp.common_files and not cmp.diff_files


def test_expand_ranges():
    assert expand({"start": 0.005, "stop": 0.025, "step": 0.0025}, "s")[-1] == 0.025
    assert len(expand({"start": 2.0, "stop": 2.44, "step": 0.004}, "b")) == 111
    assert expand(2, "x") == [2.0]
    with pytest.raises(ConfigError):
        expand({"start": 1, "stop": 0, "step": 1}, "x")
    with pytest.raises(ConfigError):
        expand("abc", "x")


def test_config_hash_ignores_output_dir():
    a = load_config(overrides={"output": {"dir": "x"}})
    b = load_config(overrides={"output": {"dir": "y"}})
    c = load_config(overrides={"seed": 1})
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_invalid_model_params_rejected():
    with pytest.raises(ConfigError, match="model.params"):
        load_config(overrides={"model": {"params": {"delta": -1}}})
