"""Run configuration (schema ``hbl-config/1``).

A config is a JSON object. Every field is optional except ``schema``; unknown
keys are rejected so that typos do not silently fall back to defaults::

    {
      "schema": "hbl-config/1",
      "n": 2, "N": 16, "r": 2, "m": 1, "k": 2,
      "seed": 0, "amplitude": 0.3, "band": 1,
      "path": {"kinds": ["linear", "geodesic", "piecewise"], "nodes": 8, "waypoints": 1},
      "solver": {"max_iters": 5000, "tol": 1e-6, "start": "perturbed", "perturbation": 0.1,
                 "cone_every": 100, "cone_sample": 64, "dt0": null},
      "samples": {"pairs": 20, "triples": 3, "directions": 10, "geodesics": 10, "t_samples": 11,
                  "nakano": 1000, "local_min_trials": 100, "local_min_eps": 0.01},
      "verify": {"suites": [], "tol_scale": 1.0},
      "output_dir": "runs/default"
    }

``m`` is an integer level or a list of r split levels.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigurationError

SCHEMA = "hbl-config/1"

DEFAULTS = {
    "schema": SCHEMA,
    "n": 2,
    "N": 16,
    "r": 2,
    "m": 1,
    "k": 2,
    "seed": 0,
    "amplitude": 0.3,
    "band": 1,
    "path": {"kinds": ["linear", "geodesic", "piecewise"], "nodes": 8, "waypoints": 1},
    "solver": {
        "max_iters": 5000,
        "tol": 1e-6,
        "start": "perturbed",
        "perturbation": 0.1,
        "cone_every": 100,
        "cone_sample": 64,
        "dt0": None,
    },
    "samples": {
        "pairs": 20,
        "triples": 3,
        "directions": 10,
        "geodesics": 10,
        "t_samples": 11,
        "nakano": 1000,
        "local_min_trials": 100,
        "local_min_eps": 0.01,
    },
    "verify": {"suites": [], "tol_scale": 1.0},
    "output_dir": "runs/default",
}

SCALAR_KEYS = ("n", "N", "r", "k", "seed", "amplitude", "band", "output_dir")


def _merge(base, override, where="config"):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigurationError(f"unknown key {where}.{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"{where}.{key} must be an object")
            out[key] = _merge(base[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        validate(self.data)

    def __getattr__(self, name):
        data = self.__dict__.get("data")
        if data is not None and name in data:
            return data[name]
        raise AttributeError(name)

    @property
    def levels(self):
        m = self.data["m"]
        return m if isinstance(m, int) else tuple(m)

    def canonical(self):
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, overrides: dict):
        data = copy.deepcopy(self.data)
        for key, value in overrides.items():
            if key not in SCALAR_KEYS and key != "m":
                raise ConfigurationError(f"only scalar fields can be overridden from flags, not {key!r}")
            data[key] = value
        return RunConfig(data)

    def background(self):
        from .geometry import Background

        return Background(self.n, self.N, self.r, self.levels)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _positive(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0


def validate(data):
    if data.get("schema") != SCHEMA:
        raise ConfigurationError(f"config schema must be {SCHEMA!r}, got {data.get('schema')!r}")
    for key in ("n", "N", "r", "k", "seed", "band"):
        if not _is_int(data[key]):
            raise ConfigurationError(f"{key} must be an integer")
    n, N, r, k = data["n"], data["N"], data["r"], data["k"]
    if not 1 <= n <= 3:
        raise ConfigurationError(f"n={n} outside 1..3")
    if not 1 <= k <= n:
        raise ConfigurationError(f"k={k} must satisfy 1 <= k <= n={n}")
    if N < 8 or N & (N - 1):
        raise ConfigurationError(f"N={N} must be a power of two >= 8")
    if r < 1:
        raise ConfigurationError("r must be >= 1")
    m = data["m"]
    if isinstance(m, list):
        if len(m) != r or not all(_is_int(v) for v in m):
            raise ConfigurationError(f"split levels m must be {r} integers")
    elif not _is_int(m):
        raise ConfigurationError("m must be an integer or a list of integers")
    if data["band"] < 1 or 3 * data["band"] > N:
        raise ConfigurationError(f"band={data['band']} must lie in 1..N/3")
    if not _positive(data["amplitude"]):
        raise ConfigurationError("amplitude must be positive")
    p = data["path"]
    kinds = p["kinds"]
    if not isinstance(kinds, list) or not kinds or any(x not in ("linear", "geodesic", "piecewise") for x in kinds):
        raise ConfigurationError("path.kinds must be a non-empty list of linear/geodesic/piecewise")
    if not _is_int(p["nodes"]) or p["nodes"] < 2:
        raise ConfigurationError("path.nodes must be an integer >= 2")
    if not _is_int(p["waypoints"]) or p["waypoints"] < 1:
        raise ConfigurationError("path.waypoints must be an integer >= 1")
    s = data["solver"]
    if not _is_int(s["max_iters"]) or s["max_iters"] < 0:
        raise ConfigurationError("solver.max_iters must be a non-negative integer")
    if not _positive(s["tol"]):
        raise ConfigurationError("solver.tol must be positive")
    if s["start"] not in ("perturbed", "random", "background"):
        raise ConfigurationError("solver.start must be perturbed, random or background")
    if not _positive(s["perturbation"]):
        raise ConfigurationError("solver.perturbation must be positive")
    if s["dt0"] is not None and not _positive(s["dt0"]):
        raise ConfigurationError("solver.dt0 must be positive or null")
    for key in ("cone_every", "cone_sample"):
        if not _is_int(s[key]) or s[key] < 0:
            raise ConfigurationError(f"solver.{key} must be a non-negative integer")
    for key, v in data["samples"].items():
        if key == "local_min_eps":
            if not (isinstance(v, (int, float)) and v >= 0):
                raise ConfigurationError("samples.local_min_eps must be >= 0")
        elif not _is_int(v) or v < 0:
            raise ConfigurationError(f"samples.{key} must be a non-negative integer")
    if data["samples"]["t_samples"] < 2:
        raise ConfigurationError("samples.t_samples must be >= 2")
    v = data["verify"]
    if not _positive(v["tol_scale"]):
        raise ConfigurationError("verify.tol_scale must be positive")
    if not isinstance(v["suites"], list):
        raise ConfigurationError("verify.suites must be a list")
    if not isinstance(data["output_dir"], str) or not data["output_dir"]:
        raise ConfigurationError("output_dir must be a non-empty string")


def load_config(path=None, text=None) -> RunConfig:
    """Read and validate a config file (or JSON text); missing fields take defaults."""
    if path is not None:
        with open(path) as fh:  # OSError propagates: an IO failure, not a schema one
            text = fh.read()
    if text is None:
        return RunConfig()
    try:
        raw = json.loads(text)
    except ValueError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    return RunConfig(_merge(DEFAULTS, raw))
