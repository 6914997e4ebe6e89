import subprocess
import sys

import numpy as np
import pytest

from noonsim.cli import CSV_HEADER, run
from noonsim.config import ConfigError, ExperimentConfig, format_config, parse_config


def _rows(path):
    lines = path.read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == CSV_HEADER
    return np.array([[float(v) for v in ln.split(",")] for ln in body[1:]])


def test_empty_file_gives_defaults(tmp_path):
    cfg_file = tmp_path / "empty.cfg"
    cfg_file.write_text("")
    assert parse_config(cfg_file) == ExperimentConfig()


def test_beta_from_file(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# storage run\nbeta = 0.2   # retrieval efficiency\nseed = 5\n")
    cfg = parse_config(cfg_file)
    assert cfg.beta == 0.2 and cfg.seed == 5


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"beta": "1.5"}, "beta"),
        ({"mode_mismatch": "-0.1"}, "mode_mismatch"),
        ({"colour": "blue"}, "colour"),
        ({"theta_points": "many"}, "theta_points"),
        ({"source": "laser"}, "source"),
    ],
)
def test_config_errors_name_the_key(overrides, key):
    with pytest.raises(ConfigError) as info:
        parse_config(overrides=overrides)
    assert info.value.key == key
    assert str(info.value).startswith(key)


def test_distinct_messages(tmp_path):
    messages = set()
    for kwargs in ({"path": tmp_path / "nope.cfg"}, {"overrides": {"bogus": 1}}, {"overrides": {"beta": 2}}):
        with pytest.raises(ConfigError) as info:
            parse_config(**kwargs)
        messages.add(str(info.value).split(":", 1)[1])
    assert len(messages) == 3


def test_format_round_trip(tmp_path):
    cfg = ExperimentConfig(beta=0.37, stage="after", gate_enabled=False)
    path = tmp_path / "dump.cfg"
    path.write_text(format_config(cfg))
    assert parse_config(path) == cfg


def test_fringe_csv_has_four_theta_period(tmp_path, capsys):
    code = run(["fringe", "--source", "noon", "--stage", "before", "--detectors", "d1d2", "--out", str(tmp_path)])
    assert code == 0
    assert "V1 =" in capsys.readouterr().out
    data = _rows(tmp_path / "fringe-noon-before-d1d2.csv")
    theta, expected = data[:, 0], data[:, 1]
    quarter = len(theta) // 4  # theta spans [0, pi), so this shifts by pi/4
    np.testing.assert_allclose(expected[: len(theta) // 2], expected[len(theta) // 2:], rtol=1e-8)
    assert not np.allclose(expected[:quarter], expected[quarter: 2 * quarter], rtol=1e-3)
    assert np.argmin(expected) == 0
    np.testing.assert_allclose(data[:, 3], np.sqrt(data[:, 2]), rtol=1e-8)
    assert (tmp_path / "fringe-noon-before-d1d2.manifest.txt").exists()


def test_discriminate_coherent(tmp_path, capsys):
    code = run(["discriminate", "--source", "coherent", "--out", str(tmp_path), "--set", "theta_points=32"])
    assert code == 0
    out = capsys.readouterr().out
    assert "classification: coherent" in out
    assert "residual ratio" in out


def test_selftest_exit_code():
    assert run(["selftest"]) == 0


def test_selftest_entry_point():
    proc = subprocess.run([sys.executable, "-m", "noonsim.cli", "selftest"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "FAIL" not in proc.stdout


def test_rerun_is_byte_identical(tmp_path):
    args = ["fringe", "--source", "single", "--set", "theta_points=16", "--seed", "42"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    name = "fringe-single-before-d1d2.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize(
    "args, name",
    [
        (["hom"], "hom.csv"),
        (["fock-peak"], "fock-peak.csv"),
        (["fringe", "--detectors", "d3d4"], "fringe-noon-before-d3d4.csv"),
        (["discriminate", "--source", "noon"], "discriminate-noon-before.csv"),
    ],
)
def test_header_is_stable(tmp_path, args, name):
    assert run(args + ["--out", str(tmp_path), "--set", "theta_points=16"]) == 0
    body = [ln for ln in (tmp_path / name).read_text().splitlines() if not ln.startswith("#")]
    assert body[0] == CSV_HEADER
    assert {len(ln.split(",")) for ln in body} == {5}


def test_bad_config_exit_code(tmp_path, capsys):
    assert run(["fringe", "--set", "beta=1.5", "--out", str(tmp_path)]) == 2
    assert "beta" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_scenario_error_leaves_no_files(tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["fringe", "--source", "single", "--detectors", "d3d4", "--out", str(out)]) == 1
    assert "failed" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_noiseless_run_writes_zero_counts(tmp_path):
    assert run(["fringe", "--set", "noiseless=true", "--set", "theta_points=16", "--out", str(tmp_path)]) == 0
    data = _rows(tmp_path / "fringe-noon-before-d1d2.csv")
    assert np.all(data[:, 2] == 0)
    np.testing.assert_allclose(data[:, 4], data[:, 1], atol=1e-9)
