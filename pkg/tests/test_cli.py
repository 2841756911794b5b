import json
import math
from pathlib import Path

import numpy as np
import pytest

from ionwva.cli import field_provenance, main
from ionwva.config import parse_config
from ionwva.errors import ConfigurationError
from ionwva.reconstruction import SignalSet, read_distribution_csv
from ionwva.scenarios import CURVE_COLUMNS, read_curve_csv, write_curve_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _run(tmp_path, data, *extra):
    out = tmp_path / "out"
    code = main(["run", "--config", _write(tmp_path, data), "--out-dir", str(out), *extra])
    return code, out


AMPLIFY = {"scenario": "amplify", "pulse": {"rabi_hz": 19000.0, "eta": 0.08, "duration_us": 4.0}, "theta": [0.02]}


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == ["amplify", "sweep_z", "sweep_p", "calibrate", "reconstruct", "fitdemo"]


def test_validate_reports_regime(tmp_path, capsys):
    assert main(["validate", "--config", _write(tmp_path, AMPLIFY)]) == 0
    report = json.loads(capsys.readouterr().out)
    point = report["derived"]["points"][0]
    assert point["regime"] == "outside weak-coupling limit"
    assert point["success_probability"] == pytest.approx(7.64e-4, abs=1e-6)
    assert report["derived"]["splitting_nm"] == pytest.approx(0.362, abs=1e-3)


def test_missing_theta_is_a_field_error(tmp_path, capsys):
    cfg = {"scenario": "sweep_z", "g_grid": {"start": 0, "stop": 1, "num": 3}}
    assert main(["validate", "--config", _write(tmp_path, cfg)]) == 2
    assert "theta: required" in capsys.readouterr().err


def test_undefined_postselection_rejected(tmp_path, capsys):
    cfg = {"scenario": "amplify", "g": 0.0, "theta": [0.0]}
    assert main(["validate", "--config", _write(tmp_path, cfg)]) == 2
    assert "undefined postselection" in capsys.readouterr().err


def test_bad_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "--config", str(bad)]) == 2
    assert main(["validate", "--config", str(tmp_path / "nope.json")]) == 2


def test_unknown_field_and_schema_version(tmp_path, capsys):
    assert main(["validate", "--config", _write(tmp_path, {**AMPLIFY, "thetas": [0.1]})]) == 2
    assert main(["validate", "--config", _write(tmp_path, {**AMPLIFY, "schema_version": 2})]) == 2
    err = capsys.readouterr().err
    assert "thetas" in err and "schema_version" in err


def test_numeric_failure_exits_3(tmp_path, capsys):
    cfg = {"scenario": "calibrate", "pulse": {"rabi_hz": 150000.0}, "times_us": {"start": 0, "stop": 60, "num": 4}, "n_max": 8}
    code, _ = _run(tmp_path, cfg)
    assert code == 3
    assert "scenario calibrate" in capsys.readouterr().err


def test_amplify_manifest_headline(tmp_path):
    code, out = _run(tmp_path, AMPLIFY)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    point = manifest["results"]["points"][0]
    assert 0.35 <= point["splitting_nm"] <= 0.42
    assert 9.0 <= point["shift_nm"] <= 10.5
    assert 23 <= point["amplification"] <= 27
    assert manifest["version"].startswith("v")
    assert manifest["provenance"]["fields"]["theta"] == "config"
    assert manifest["provenance"]["fields"]["trap.frequency_hz"] == "default"
    assert "wall_time_s" in json.loads((out / "timing.json").read_text())


def test_seed_priority(tmp_path, monkeypatch):
    monkeypatch.setenv("WVA_SEED", "5")
    _, out = _run(tmp_path, AMPLIFY)
    m = json.loads((out / "manifest.json").read_text())
    assert (m["seed"], m["seed_source"]) == (5, "env")
    _, out = _run(tmp_path, {**AMPLIFY, "seed": 6})
    m = json.loads((out / "manifest.json").read_text())
    assert (m["seed"], m["seed_source"]) == (6, "config")
    _, out = _run(tmp_path, {**AMPLIFY, "seed": 6}, "--seed", "7")
    m = json.loads((out / "manifest.json").read_text())
    assert (m["seed"], m["seed_source"]) == (7, "cli")
    monkeypatch.delenv("WVA_SEED")
    _, out = _run(tmp_path, AMPLIFY)
    m = json.loads((out / "manifest.json").read_text())
    assert (m["seed"], m["seed_source"]) == (0, "default")


def test_bad_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("WVA_SEED", "abc")
    assert main(["validate", "--config", _write(tmp_path, AMPLIFY)]) == 2


def test_sweep_columns_and_weak_limit(tmp_path):
    cfg = {"scenario": "sweep_z", "theta": [0.1, 0.2, 0.4], "g_grid": {"start": 0, "stop": 1.2, "num": 7}}
    code, out = _run(tmp_path, cfg, "--exact-only")
    assert code == 0
    lines = (out / "sweep_z.csv").read_text().splitlines()
    assert lines[0].split(",") == CURVE_COLUMNS["sweep_z"]
    data = read_curve_csv(out / "sweep_z.csv")
    assert len(data["g"]) == 21
    np.testing.assert_allclose(data["weak_limit"], -data["g"] / np.tan(data["theta"]), rtol=1e-14)
    np.testing.assert_allclose(data["simulated"], data["exact"], atol=1e-8)


def test_calibration_saturates(tmp_path):
    code, out = _run(tmp_path, json.loads((CONFIGS / "calibrate.json").read_text()))
    assert code == 0
    data = read_curve_csv(out / "calibrate.csv")
    assert data["exact"][-1] == pytest.approx(0.5, abs=1e-4)
    assert np.all(np.diff(data["exact"]) >= 0)


@pytest.mark.parametrize("name", ["amplify", "sweep_z", "sweep_p", "calibrate", "reconstruct", "fitdemo"])
def test_outputs_round_trip_through_parsers(tmp_path, name):
    cfg = json.loads((CONFIGS / f"{name}.json").read_text())
    if name in ("sweep_z", "sweep_p"):
        cfg["g_grid"]["num"] = 5
    code, out = _run(tmp_path, cfg)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for fname in manifest["outputs"]:
        path = out / fname
        if fname.endswith("_cos.csv") or fname.endswith("_sin.csv"):
            SignalSet.from_csv(path).to_csv(tmp_path / "copy.csv")
        elif fname.endswith("_distribution.csv"):
            z, p, meta = read_distribution_csv(path)
            assert meta["grid"]["n"] == z.size
            continue
        elif fname.endswith(".csv"):
            data = read_curve_csv(path)
            write_curve_csv(tmp_path / "copy.csv", list(data), np.column_stack(list(data.values())).tolist())
        else:
            continue
        assert _normalize(tmp_path / "copy.csv") == _normalize(path)


def _normalize(path):
    # integer columns are re-read as floats; compare numerically
    rows = [line.split(",") for line in Path(path).read_text().splitlines()]
    return rows[0], [[_num(v) for v in r] for r in rows[1:]]


def _num(v):
    try:
        return float(v)
    except ValueError:
        return v


def test_fixed_seed_regression(tmp_path):
    code, out = _run(tmp_path, json.loads((CONFIGS / "fitdemo.json").read_text()), "--seed", "11")
    assert code == 0
    point = json.loads((out / "manifest.json").read_text())["results"]["points"][0]
    assert point["fitted_mean"] == -0.7130709321790576
    assert point["fitted_sigma"] == 0.11065151569014259


def test_provenance_marks_nested_fields():
    cfg = parse_config({"scenario": "fitdemo", "reconstruction": {"k_max": 4.0}})
    prov = field_provenance(cfg)
    assert prov["reconstruction.k_max"] == "config"
    assert prov["reconstruction.restarts"] == "default"
    assert prov["shots"] == "default"


def test_config_rejects_out_of_range_angles():
    with pytest.raises(ConfigurationError, match="theta"):
        parse_config({"scenario": "amplify", "theta": [math.pi]})
