"""Strict JSON run configuration.

Unknown sections or keys are rejected and every field is type-checked
before anything is allocated. Example::

    {
      "model": {"p": 3, "r": 3, "N": 150, "lambdas": [3, 2, 1], "M": 90000, "seed": 1},
      "init": {"mode": "conditioned_positive", "seed": 2},
      "flow": {"eta": 0.01, "t_max": 10, "sample_dt": null, "stop_eps": 0.1},
      "detect": {"eps": 0.1},
      "output": {"dir": "out", "emit_svg": true}
    }
"""

import json
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .trajectory import FlowConfig

__all__ = ["RunConfig", "parse_config", "load_config"]

_NUM = (int, float)

_SCHEMA = {
    "model": {"p": int, "r": int, "N": int, "lambdas": list, "sqrt_m": _NUM, "M": _NUM,
              "alpha": _NUM, "seed": int},
    "init": {"mode": str, "seed": int, "m0": list},
    "flow": {"eta": _NUM, "t_max": _NUM, "sample_dt": (int, float, type(None)), "stop_eps": _NUM,
             "max_steps": int, "settle": _NUM, "stop_on_recovery": bool, "record_noise_drift": bool,
             "deterministic_reduction": bool, "method": str},
    "detect": {"eps": _NUM, "eps_prime": (int, float, type(None))},
    "output": {"dir": str, "emit_svg": bool, "log_time": bool},
    "predict": {"threshold": _NUM},
    "sweep": {"N": list, "p": list, "r": list, "lambdas": list, "sqrt_m": list, "alpha": list,
              "seeds_per_cell": int, "master_seed": int},
    "concentration": {"N": int, "r": int, "samples": int, "seed": int},
}

_FLOW_FIELDS = ("eta", "t_max", "sample_dt", "stop_eps", "max_steps", "settle", "stop_on_recovery",
                "record_noise_drift", "deterministic_reduction")


@dataclass
class RunConfig:
    """Validated configuration; ``model`` is None for sweep-only documents."""

    model: dict | None
    init: dict = field(default_factory=dict)
    flow: FlowConfig = FlowConfig()
    method: str = "LSODA"
    detect: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    predict: dict = field(default_factory=dict)
    sweep: dict | None = None
    concentration: dict = field(default_factory=dict)

    @property
    def out_dir(self):
        return self.output.get("dir", "out")

    @property
    def eps(self):
        return self.detect.get("eps", self.flow.stop_eps)


def _typecheck(section, key, value, expected):
    # bool is an int subclass; never accept it for a numeric field
    if isinstance(value, bool) and expected is not bool and not (isinstance(expected, tuple) and bool in expected):
        raise ConfigError(f"{section}.{key}: expected a number, got a boolean")
    if not isinstance(value, expected):
        raise ConfigError(f"{section}.{key}: wrong type {type(value).__name__}")
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"{section}.{key}: must be finite")


def _number_list(section, key, value, length=None):
    if not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in value):
        raise ConfigError(f"{section}.{key}: expected a list of numbers")
    if length is not None and len(value) != length:
        raise ConfigError(f"{section}.{key}: expected {length} entries, got {len(value)}")
    return [float(x) for x in value]


def _check_model(model):
    for key in ("p", "r", "N", "lambdas"):
        if key not in model:
            raise ConfigError(f"model.{key} is required")
    given = [k for k in ("sqrt_m", "M", "alpha") if k in model]
    if len(given) != 1:
        raise ConfigError(f"model needs exactly one of sqrt_m, M, alpha (got {given or 'none'})")
    p, r, N = model["p"], model["r"], model["N"]
    if p < 3:
        raise ConfigError("model.p must be >= 3")
    if not 1 <= r <= N:
        raise ConfigError("model needs 1 <= r <= N")
    lam = _number_list("model", "lambdas", model["lambdas"], r)
    if any(a < b for a, b in zip(lam, lam[1:])) or min(lam) < 0:
        raise ConfigError("model.lambdas must be non-negative and non-increasing")
    if "sqrt_m" in model:
        sqrt_m = float(model["sqrt_m"])
    elif "M" in model:
        if model["M"] < 0:
            raise ConfigError("model.M must be >= 0")
        sqrt_m = math.sqrt(model["M"])
    else:
        sqrt_m = N ** (model["alpha"] / 2.0)
    if sqrt_m < 0:
        raise ConfigError("model.sqrt_m must be >= 0")
    out = dict(p=p, r=r, N=N, lambdas=lam, sqrt_m=sqrt_m)
    if "seed" in model:
        out["seed"] = model["seed"]
    return out


def parse_config(doc):
    """Validate a parsed JSON document and return a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    for section, body in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            _typecheck(section, key, value, _SCHEMA[section][key])
    model = _check_model(doc["model"]) if "model" in doc else None
    if model is None and "sweep" not in doc and "concentration" not in doc:
        raise ConfigError("config needs a model section")

    init = dict(doc.get("init", {}))
    init.setdefault("mode", "conditioned_positive")
    if init["mode"] not in ("uniform", "conditioned_positive", "explicit"):
        raise ConfigError(f"init.mode {init['mode']!r} not one of uniform, conditioned_positive, explicit")
    if "m0" in init:
        r = model["r"] if model else len(init["m0"])
        if len(init["m0"]) != r or not all(isinstance(row, list) for row in init["m0"]):
            raise ConfigError(f"init.m0 must be an {r} x {r} nested list")
        init["m0"] = [_number_list("init", "m0", row, r) for row in init["m0"]]
    if init["mode"] == "explicit" and "m0" not in init:
        raise ConfigError("init.mode explicit needs init.m0")

    flow_doc = doc.get("flow", {})
    method = flow_doc.get("method", "LSODA")
    if method not in ("LSODA", "DOP853", "RK4"):
        raise ConfigError(f"flow.method {method!r} not one of LSODA, DOP853, RK4")
    try:
        flow = FlowConfig(**{k: v for k, v in flow_doc.items() if k in _FLOW_FIELDS})
    except ValueError as exc:
        raise ConfigError(f"flow: {exc}") from None

    detect = dict(doc.get("detect", {}))
    if "eps" in detect and not 0 < detect["eps"] < 1:
        raise ConfigError("detect.eps must lie in (0, 1)")

    sweep = None
    if "sweep" in doc:
        sweep = dict(doc["sweep"])
        for key in ("N", "p", "r", "lambdas"):
            if key not in sweep:
                raise ConfigError(f"sweep.{key} is required")
        if ("sqrt_m" in sweep) == ("alpha" in sweep):
            raise ConfigError("sweep needs exactly one of sqrt_m, alpha")
        sweep.setdefault("seeds_per_cell", 1)
        if sweep["seeds_per_cell"] < 1:
            raise ConfigError("sweep.seeds_per_cell must be >= 1")
    return RunConfig(model=model, init=init, flow=flow, method=method, detect=detect,
                     output=dict(doc.get("output", {})), predict=dict(doc.get("predict", {})),
                     sweep=sweep, concentration=dict(doc.get("concentration", {})))


def load_config(path):
    """Read and validate a JSON config file.

    Raises
    ------
    ConfigError
        On unreadable files, malformed JSON (with line and column) or schema
        violations.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    return parse_config(doc)


def with_overrides(cfg, out=None, seed=None, deterministic=False):
    """Apply command-line overrides (``--out``, ``--seed``, ``--deterministic``)."""
    if out is not None:
        cfg.output = dict(cfg.output, dir=out)
    if seed is not None:
        if cfg.model is not None:
            cfg.model = dict(cfg.model, seed=seed)
        if cfg.sweep is not None:
            cfg.sweep = dict(cfg.sweep, master_seed=seed)
        cfg.concentration = dict(cfg.concentration, seed=seed)
    if deterministic:
        cfg.flow = replace(cfg.flow, deterministic_reduction=True)
    return cfg
