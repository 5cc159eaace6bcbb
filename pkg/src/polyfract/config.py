"""Experiment configuration: schema validation, defaults, canonical hash.

The config file is JSON with sections graph / disorder / run /
coarse_grain / output. Validation rejects unknown keys by their dotted
path, so typos fail loudly instead of silently falling back to a
default. The resolved config (defaults materialized, CLI overrides
applied) is what gets hashed and embedded in output headers; feeding it
back through --config reproduces the run.
"""

from __future__ import annotations

import copy
import hashlib
import json

from .errors import ConfigError

# (kind, enum) per key; kind "section" nests another key table
_SCHEMA = {
    "graph": {
        "family": ("str", ("gasket", "line")),
        "level": ("int", None),
        "radius": ("int", None),
    },
    "disorder": {
        "family": ("str", ("gaussian", "rademacher", "discrete")),
        "values": ("list_float", None),
        "probs": ("list_float", None),
    },
    "run": {
        "beta": ("float", None),
        "beta_grid": ("list_float", None),
        "n": ("int", None),
        "replicas": ("int", None),
        "seed": ("int", None),
        "horizon": ("int", None),
        "rho_grid": ("list_float", None),
        "fixture": ("str", ("beta_power",)),
        "fixture_exponent": ("float", None),
        "schedule": {
            "C1": ("float", None),
            "n_min": ("int", None),
            "n_max": ("int", None),
        },
    },
    "coarse_grain": {
        "n": ("int", None),
        "C1": ("float", None),
        "C2": ("float_or_list", None),
        "C7": ("float", None),
        "R_split": ("float", None),
        "I_max": ("int", None),
        "c_tilde": ("float_or_auto", None),
        "samples": ("int", None),
        "region_radius": ("int", None),
        "ray_length": ("int", None),
        "delta": ("float", None),
        "C4_hat": ("float", None),
    },
    "output": {
        "dir": ("str", None),
        "format": ("str", ("csv", "json")),
    },
}

_DEFAULTS = {
    "run": {"seed": 0, "replicas": 16},
    "output": {"dir": ".", "format": "csv"},
}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return (isinstance(v, float) or _is_int(v)) and not isinstance(v, bool)


def _check_value(path, kind, enum, v):
    if kind == "str":
        if not isinstance(v, str):
            raise ConfigError(f"config key {path} must be a string")
        if enum is not None and v not in enum:
            raise ConfigError(
                f"config key {path} must be one of {', '.join(enum)}; "
                f"got {v!r}")
    elif kind == "int":
        if not _is_int(v):
            raise ConfigError(f"config key {path} must be an integer")
    elif kind == "float":
        if not _is_real(v):
            raise ConfigError(f"config key {path} must be a number")
    elif kind == "list_float":
        if not isinstance(v, list) or not v \
                or not all(_is_real(u) for u in v):
            raise ConfigError(
                f"config key {path} must be a non-empty list of numbers")
    elif kind == "float_or_list":
        if not (_is_real(v) or (isinstance(v, list) and v
                                and all(_is_real(u) for u in v))):
            raise ConfigError(
                f"config key {path} must be a number or a list of numbers")
    elif kind == "float_or_auto":
        if not (_is_real(v) or v == "auto"):
            raise ConfigError(
                f"config key {path} must be a number or \"auto\"")
    else:  # pragma: no cover - schema author error
        raise AssertionError(kind)


def _validate_section(prefix, schema, data):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {prefix or 'root'} must be an "
                          f"object")
    for key, v in data.items():
        path = f"{prefix}.{key}" if prefix else key
        rule = schema.get(key)
        if rule is None:
            raise ConfigError(f"unknown config key: {path}")
        if isinstance(rule, dict):
            _validate_section(path, rule, v)
        else:
            _check_value(path, rule[0], rule[1], v)


def validate_config(cfg):
    """Schema-check a raw config dict; unknown keys name their path."""
    _validate_section("", _SCHEMA, cfg)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return validate_config(cfg)


def resolve(cfg, seed=None, out=None, fmt=None):
    """Defaults plus CLI overrides; the result is the run's identity."""
    r = copy.deepcopy(cfg)
    for section, defaults in _DEFAULTS.items():
        tgt = r.setdefault(section, {})
        for k, v in defaults.items():
            tgt.setdefault(k, v)
    if seed is not None:
        if seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        r["run"]["seed"] = int(seed)
    if out is not None:
        r["output"]["dir"] = str(out)
    if fmt is not None:
        r["output"]["format"] = str(fmt)
    return validate_config(r)


def canonical(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def experiment_view(cfg):
    """The config without the output section: where artifacts land does
    not change what was computed, so it stays out of the identity."""
    r = {k: copy.deepcopy(v) for k, v in cfg.items() if k != "output"}
    return r


def config_hash(cfg):
    return hashlib.sha256(
        canonical(experiment_view(cfg)).encode()).hexdigest()[:16]


def get(cfg, dotted, default=None):
    cur = cfg
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def require(cfg, dotted, why):
    v = get(cfg, dotted)
    if v is None:
        raise ConfigError(f"config key {dotted} is required for {why}")
    return v


def build_graph(cfg, why):
    from . import graphs

    family = require(cfg, "graph.family", why)
    if family == "gasket":
        return graphs.build_gasket(require(cfg, "graph.level", why))
    return graphs.build_line(require(cfg, "graph.radius", why))


def build_spec(cfg, why):
    from .environment import DisorderSpec

    family = require(cfg, "disorder.family", why)
    if family == "gaussian":
        return DisorderSpec.gaussian()
    if family == "rademacher":
        return DisorderSpec.rademacher()
    return DisorderSpec.discrete(require(cfg, "disorder.values", why),
                                 require(cfg, "disorder.probs", why))
