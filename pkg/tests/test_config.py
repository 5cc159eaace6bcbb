import json

import pytest

from polyfract import config
from polyfract.errors import ConfigError


def test_unknown_keys_are_named():
    with pytest.raises(ConfigError, match=r"graph\.levl"):
        config.validate_config({"graph": {"family": "gasket", "levl": 3}})
    with pytest.raises(ConfigError, match="wibble"):
        config.validate_config({"wibble": 1})


def test_enum_and_type_checks():
    with pytest.raises(ConfigError, match="family"):
        config.validate_config({"graph": {"family": "tree"}})
    with pytest.raises(ConfigError):
        config.validate_config({"run": {"n": 2.5}})
    with pytest.raises(ConfigError):
        config.validate_config({"run": {"beta": True}})  # bools are not numbers
    config.validate_config({"run": {"beta": 0.5, "beta_grid": [0.1, 0.2]}})


def test_load_config_errors(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ConfigError):
        config.load_config(missing)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        config.load_config(bad)


def test_resolve_applies_defaults_and_overrides():
    cfg = config.resolve({"graph": {"family": "line", "radius": 4}},
                         seed=9, out="/tmp/x", fmt="json")
    assert cfg["run"]["seed"] == 9
    assert cfg["run"]["replicas"] == 16  # default
    assert cfg["output"]["dir"] == "/tmp/x"
    assert cfg["output"]["format"] == "json"
    # without overrides the defaults land
    cfg2 = config.resolve({"graph": {"family": "line", "radius": 4}})
    assert cfg2["run"]["seed"] == 0
    assert cfg2["output"]["format"] == "csv"


def test_canonical_is_order_insensitive():
    a = config.canonical({"run": {"beta": 0.5, "n": 4},
                          "graph": {"family": "line"}})
    b = config.canonical({"graph": {"family": "line"},
                          "run": {"n": 4, "beta": 0.5}})
    assert a == b
    json.loads(a)  # stays parseable


def test_hash_ignores_output_section():
    base = {"graph": {"family": "line", "radius": 4}}
    h1 = config.config_hash(config.resolve(base, out="/tmp/a"))
    h2 = config.config_hash(config.resolve(base, out="/tmp/b"))
    assert h1 == h2
    h3 = config.config_hash(config.resolve(
        {"graph": {"family": "line", "radius": 5}}))
    assert h3 != h1
    assert len(h1) == 16
    assert "output" not in config.experiment_view(config.resolve(base))


def test_require_and_get():
    cfg = {"run": {"beta": 0.5}}
    assert config.get(cfg, "run.beta") == 0.5
    assert config.get(cfg, "run.n", 7) == 7
    with pytest.raises(ConfigError, match="run.n"):
        config.require(cfg, "run.n", "the step count")


def test_build_graph_and_spec():
    g = config.build_graph({"graph": {"family": "line", "radius": 3}},
                           "test")
    assert g.V == 7
    with pytest.raises(ConfigError):
        config.build_graph({"graph": {"family": "gasket"}}, "test")
    spec = config.build_spec({"disorder": {"family": "rademacher"}}, "test")
    assert spec.family == "rademacher"
    # discrete needs its value/prob vectors
    with pytest.raises(ConfigError):
        config.build_spec({"disorder": {"family": "discrete"}}, "test")
    with pytest.raises(ConfigError, match="disorder.family"):
        config.build_spec({}, "test")  # the law is never implicit
