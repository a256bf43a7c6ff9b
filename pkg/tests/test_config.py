import json

import pytest

from vradmm.config import PRESETS, ConfigError, RunConfig, load_config, parse_config, preset
from vradmm.engine import QMode, SolverConfig
from vradmm.estimators import EstimatorKind


def _write(tmp_path, obj, name="c.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj), encoding="utf-8")
    return p


def test_standard_settings_with_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, {"algorithm": "svrg", "rho": 6, "eta": 2}))
    assert cfg.rho == 6.0 and cfg.eta == 2.0 and cfg.q_mode == "identity"
    assert (cfg.lambda1, cfg.lambda2) == PRESETS["a9a"] == (1e-4, 1.2e-4)
    assert cfg.graph_threshold == 0.5 and cfg.diagnostics is False and cfg.seed is None
    assert isinstance(cfg.rho, float)


def test_full_object(tmp_path):
    obj = {"algorithm": "saga", "rho": 8.5, "eta": 1, "q_mode": "uzawa", "m": 10, "iterations": 50,
           "seed": 3, "lambda1": 0, "lambda2": 0.1, "graph_threshold": 0.7, "data_path": "x.libsvm",
           "out_path": "t.csv", "diagnostics": True}
    cfg = load_config(_write(tmp_path, obj))
    assert cfg.to_dict() == {**obj, "rho": 8.5, "eta": 1.0, "lambda1": 0.0}


@pytest.mark.parametrize("obj,key", [
    ({"eta": -1}, "eta"),
    ({"rho": 0}, "rho"),
    ({"lambda1": -1e-3}, "lambda1"),
    ({"graph_threshold": 1.5}, "graph_threshold"),
    ({"iterations": -5}, "iterations"),
    ({"m": 0}, "m"),
    ({"seed": -1}, "seed"),
    ({"algorithm": "adam"}, "algorithm"),
    ({"q_mode": "newton"}, "q_mode"),
])
def test_value_errors_name_key(obj, key):
    with pytest.raises(ConfigError, match=f"^{key}:"):
        parse_config(obj)


@pytest.mark.parametrize("obj,key,desc", [
    ({"rho": "6"}, "rho", "number"),
    ({"rho": True}, "rho", "number"),
    ({"iterations": 10.5}, "iterations", "integer"),
    ({"seed": "7"}, "seed", "integer or null"),
    ({"diagnostics": 1}, "diagnostics", "boolean"),
    ({"algorithm": 3}, "algorithm", "string"),
    ({"data_path": 5}, "data_path", "string or null"),
])
def test_type_errors_name_key_and_type(obj, key, desc):
    with pytest.raises(ConfigError, match=f"^{key}: expected {desc}"):
        parse_config(obj)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key\\(s\\): beta, gamma"):
        parse_config({"gamma": 1, "beta": 2, "rho": 3})


def test_not_an_object():
    with pytest.raises(ConfigError, match="JSON object"):
        parse_config([1, 2])


def test_bad_json_reports_position(tmp_path):
    p = _write(tmp_path, '{\n  "rho": 6,\n  "eta": \n}')
    with pytest.raises(ConfigError, match="line 4 column 1"):
        load_config(p)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ConfigError, match="nope.json"):
        load_config(tmp_path / "nope.json")


def test_merge_over_base():
    base = RunConfig(rho=9.0, seed=4)
    cfg = parse_config({"eta": 3}, base)
    assert (cfg.rho, cfg.eta, cfg.seed) == (9.0, 3.0, 4)


def test_solver_config():
    sc = RunConfig(algorithm="SAG-ADMM", q_mode="uzawa", eta=50, seed=2, iterations=20).solver(record_every=5)
    assert isinstance(sc, SolverConfig)
    assert sc.algorithm is EstimatorKind.SAG and sc.q_mode is QMode.UZAWA
    assert sc.seed == 2 and sc.iterations == 20 and sc.record_every == 5


def test_solver_needs_seed():
    with pytest.raises(ConfigError, match="seed"):
        RunConfig().solver()


def test_presets():
    assert (preset("covertype").lambda1, preset("covertype").lambda2) == (1e-4, 1e-6)
    assert preset("MNIST8M", seed=1).lambda2 == 1.2e-3
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("rcv1")


def test_with_is_validated():
    with pytest.raises(ConfigError):
        RunConfig().with_(eta=0.0)
