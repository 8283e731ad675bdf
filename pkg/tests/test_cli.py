import copy
import csv
import io
import json
import math
from pathlib import Path

import pytest
import yaml

from circstab import cli
from circstab.errors import InvalidInput

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

VORTEX = {
    "command": "find-modes",
    "setup": {"rho_plus": 1.0, "rho_minus": 0.0, "alpha": 0.0, "r_in": 0.0, "r_out": "inf",
              "profile_plus": {"kind": "constant", "B": 1.0},
              "profile_minus": {"kind": "constant", "B": 0.0}},
    "k": 2,
}


def vortex_root(k):
    """Upper root of the constant-vortex closed form."""
    return complex(1 - 1 / k, math.sqrt((1 / k) * (1 - 1 / k)))


def write(tmp_path, cfg, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def table(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_find_modes_constant_vortex(tmp_path, capsys):
    assert cli.main(["--config", write(tmp_path, VORTEX)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# config_hash=" + cli.config_hash(VORTEX))
    assert "# tolerances=" in out.splitlines()[1]
    rows = table(out)
    assert list(rows[0]) == list(cli.COLUMNS)
    roots = sorted(complex(float(r["re_c"]), float(r["im_c"])) for r in rows
                   if r["re_c"])
    assert len(roots) == 1
    assert abs(roots[0] - vortex_root(2)) < 1e-8
    assert rows[0]["count"] == "1"


def test_solve_mode_residual_small_at_root():
    cfg = dict(VORTEX, command="solve-mode", mode={"re": vortex_root(2).real,
                                                 "im": vortex_root(2).imag})
    _, rows = cli.run(cfg)
    assert rows[0]["residual"] < 1e-8
    assert "accepted=True" in rows[0]["notes"]


def test_semicircle_command():
    cfg = dict(VORTEX, command="semicircle", k_range=[2, 4])
    cfg.pop("k")
    _, rows = cli.run(cfg)
    assert [r["k"] for r in rows] == [2, 3, 4]
    assert all(r["m"] == 0.0 and r["M"] == 1.0 for r in rows)
    assert not any(r["condition"] for r in rows)


def test_verify_oracles_command():
    _, rows = cli.run({"command": "verify-oracles", "oracle_samples": 3, "seed": 1})
    assert len(rows) == len(cli.ORACLE_DRAWS)
    assert all(r["residual"] <= 1e-8 for r in rows)


def test_critical_layer_command():
    cfg = yaml.safe_load((CONFIGS / "critical_layer.yaml").read_text())
    _, rows = cli.run(cfg)
    assert rows[0]["re_c"] == pytest.approx(1.2244067, abs=1e-6)
    assert rows[0]["im_c"] == pytest.approx(8.2009e-5, rel=1e-3)


def test_epsilon_scaling_json():
    cfg = yaml.safe_load((CONFIGS / "epsilon_scaling.yaml").read_text())
    text, _ = cli.run(cfg)
    doc = json.loads(text)
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert abs(doc["slope"] - 0.5) <= 0.05
    assert doc["config_hash"] == cli.config_hash(cfg)


def test_sweep_capillary_threshold():
    cfg = yaml.safe_load((CONFIGS / "capillary_sweep.yaml").read_text())
    _, rows = cli.run(cfg, threads=2)
    counts = {r["alpha"]: r["count"] for r in rows}
    assert all(counts[a] > 0 for a in (0.06, 0.1, 0.15))
    assert all(counts[a] == 0 for a in (0.17, 0.2, 0.25))
    assert all(r["error"] == "" for r in rows)


def test_sweep_deterministic_across_threads():
    cfg = yaml.safe_load((CONFIGS / "capillary_sweep.yaml").read_text())
    a, _ = cli.run(copy.deepcopy(cfg), threads=1)
    b, _ = cli.run(copy.deepcopy(cfg), threads=3)
    assert a == b


def test_empty_sweep_grid(tmp_path, capsys):
    cfg = dict(VORTEX, command="sweep", sweep={"axes": {"alpha": []}})
    assert cli.main(["--config", write(tmp_path, cfg)]) == 0
    out = capsys.readouterr().out
    assert table(out) == []
    assert "error" in out.splitlines()[2]


def test_sweep_records_point_errors():
    cfg = dict(VORTEX, command="sweep", sweep={"axes": {"r_in": [0.0, 2.0]}})
    _, rows = cli.run(cfg)
    assert rows[0]["error"] == "" and rows[1]["error"] != ""


def test_strict_rejects_unknown_key(tmp_path, capsys):
    cfg = dict(VORTEX, colour="blue")
    assert cli.main(["--config", write(tmp_path, cfg), "--strict"]) == 2
    assert "colour" in capsys.readouterr().err


def test_non_strict_warns_and_ignores(tmp_path, caplog):
    cfg = dict(VORTEX, colour="blue")
    with caplog.at_level("WARNING", logger="circstab"):
        assert cli.main(["--config", write(tmp_path, cfg), "--out",
                         str(tmp_path / "o.csv")]) == 0
    assert "colour" in caplog.text
    assert (tmp_path / "o.csv").read_text().startswith("# config_hash=")


@pytest.mark.parametrize("mutate", [
    lambda c: c.pop("setup"),
    lambda c: c.update(k=0),
    lambda c: c["setup"].update(r_out="big"),
    lambda c: c["setup"]["profile_plus"].update(kind="spline"),
])
def test_invalid_configs_exit_2(tmp_path, mutate):
    cfg = copy.deepcopy(VORTEX)
    mutate(cfg)
    assert cli.main(["--config", write(tmp_path, cfg)]) == 2


def test_missing_file_exit_2(tmp_path):
    assert cli.main(["--config", str(tmp_path / "absent.yaml")]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    # exact capillary threshold puts a double real root on the search contour
    cfg = copy.deepcopy(VORTEX)
    cfg["setup"]["alpha"] = 1.0 / 6.0
    assert cli.main(["--config", write(tmp_path, cfg)]) == 3
    diag = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diag["command"] == "find-modes" and diag["error"]


def test_command_override_and_json(tmp_path, capsys):
    path = write(tmp_path, VORTEX)
    assert cli.main(["--config", path, "--command", "semicircle", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["command"] == "semicircle" and doc["rows"][0]["M"] == 1.0


def test_validate_returns_pruned_copy():
    cfg = dict(VORTEX, extra={"a": 1})
    with pytest.raises(InvalidInput):
        cli.validate(cfg, strict=True)
    assert "extra" not in cli.validate(cfg, strict=False)


def test_config_hash_key_order():
    a = {"x": 1, "y": [1, 2]}
    b = {"y": [1, 2], "x": 1}
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(a) != cli.config_hash({"x": 2, "y": [1, 2]})
