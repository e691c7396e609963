"""Scenario configuration: a single strictly validated JSON document.

Example (the minimal Riccati scenario)::

    {"scenario": "riccati",
     "params": {"mu": 1, "kappa": 1, "kappa_tilde": 1},
     "initial_state": {"eta_re": 1.0},
     "T": 20}

Omitted physical constants default to natural units (``hbar = m = 1``,
``mu = kappa = kappa_tilde = 0``). Unknown keys are rejected with the
closest known key suggested.
"""

from __future__ import annotations

import difflib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ConfigParseError

SCENARIOS = ("riccati", "filter", "oracle", "lqg", "hjb-check", "mc")
CONTROL_SCENARIOS = ("lqg", "hjb-check", "mc")

DEFAULT_DT = {"riccati": 1e-3, "filter": 1e-3, "oracle": 1e-4, "lqg": 1e-3, "hjb-check": 1e-3, "mc": 1e-3}

_TOP_KEYS = {
    "scenario", "params", "initial_state", "grid", "cost", "controls", "dt", "T",
    "n_traj", "seed", "outputs", "scheme", "record_every", "gain_scale", "n_check", "box",
}
_PARAM_KEYS = {"mass", "hbar", "mu", "kappa", "kappa_tilde"}
_STATE_KEYS = {"q_bar", "p_bar", "eta_re", "eta_im"}
_GRID_KEYS = {"x_min", "x_max", "n_points"}
_COST_KEYS = {"A", "E", "R"}
_CONTROL_KEYS = {"f", "v"}
_OUTPUT_KEYS = {"summary", "csv", "per_path_csv", "report"}
_BOX_KEYS = {"t_min", "t_max", "x_halfwidth"}


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict
    initial_state: dict
    T: float
    dt: float
    seed: int = 0
    grid: Optional[dict] = None
    cost: Optional[dict] = None
    controls: dict = field(default_factory=lambda: {"f": 0.0, "v": 0.0})
    n_traj: int = 1000
    outputs: dict = field(default_factory=lambda: {"summary": "summary.json"})
    scheme: str = "exponential"
    record_every: Optional[int] = None
    gain_scale: float = 1.0
    n_check: int = 1000
    box: Optional[dict] = None

    def to_dict(self):
        return {k: v for k, v in vars(self).items()}


def _reject_unknown(d, allowed, prefix):
    for key in d:
        if key not in allowed:
            near = difflib.get_close_matches(key, sorted(allowed), n=1)
            hint = f" (did you mean '{near[0]}'?)" if near else ""
            raise ConfigError(f"unknown key '{prefix}{key}'{hint}", key=prefix + key)


def _section(raw, name, allowed):
    sec = raw.get(name, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object", key=name)
    _reject_unknown(sec, allowed, name + ".")
    return dict(sec)


def _number(value, key, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"'{key}' must be a finite number", key=key)
    value = float(value)
    if positive and not value > 0:
        raise ConfigError(f"'{key}' must be > 0 (got {value})", key=key)
    if nonneg and value < 0:
        raise ConfigError(f"'{key}' must be >= 0 (got {value})", key=key)
    return value


def _integer(value, key, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"'{key}' must be an integer >= {minimum}", key=key)
    return value


def _matrix(value, key):
    try:
        m = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be a 2x2 numeric matrix", key=key) from None
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise ConfigError(f"'{key}' must be a 2x2 numeric matrix", key=key)
    if not np.allclose(m, m.T, rtol=0, atol=1e-12):
        raise ConfigError(f"'{key}' must be symmetric", key=key)
    return m.tolist()


def validate_config(raw) -> ScenarioConfig:
    """Check a parsed JSON document and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"'scenario' must be one of {', '.join(SCENARIOS)}", key="scenario")

    params = {"mass": 1.0, "hbar": 1.0, "mu": 0.0, "kappa": 0.0, "kappa_tilde": 0.0}
    for k, v in _section(raw, "params", _PARAM_KEYS).items():
        params[k] = _number(v, f"params.{k}",
                            positive=k in ("mass", "hbar"), nonneg=k in ("kappa", "kappa_tilde"))

    state_raw = _section(raw, "initial_state", _STATE_KEYS)
    state = {"q_bar": 0.0, "p_bar": 0.0}
    for k, v in state_raw.items():
        state[k] = _number(v, f"initial_state.{k}", positive=(k == "eta_re"))
    if "eta_re" not in state:
        if scenario in CONTROL_SCENARIOS:
            # None selects the relaxed value at run time.
            state["eta_re"] = None
            if "eta_im" in state:
                raise ConfigError("'initial_state.eta_im' given without eta_re", key="initial_state.eta_im")
        else:
            state["eta_re"] = 1.0
    state.setdefault("eta_im", 0.0 if state["eta_re"] is not None else None)

    if "T" not in raw:
        raise ConfigError("'T' (horizon) is required", key="T")
    T = _number(raw["T"], "T", positive=True)
    dt = _number(raw.get("dt", DEFAULT_DT[scenario]), "dt", positive=True)
    n = T / dt
    if abs(n - round(n)) > 1e-6 * max(1.0, n):
        raise ConfigError("'T' must be an integer multiple of 'dt'", key="dt")

    cfg = ScenarioConfig(scenario=scenario, params=params, initial_state=state, T=T, dt=dt)
    if "seed" in raw:
        cfg.seed = _integer(raw["seed"], "seed", 0)

    if "grid" in raw:
        g = _section(raw, "grid", _GRID_KEYS)
        grid = {"n_points": _integer(g.get("n_points", 2048), "grid.n_points", 256)}
        if grid["n_points"] & (grid["n_points"] - 1):
            raise ConfigError("'grid.n_points' must be a power of two", key="grid.n_points")
        if ("x_min" in g) != ("x_max" in g):
            raise ConfigError("'grid.x_min' and 'grid.x_max' go together", key="grid.x_min")
        if "x_min" in g:
            grid["x_min"] = _number(g["x_min"], "grid.x_min")
            grid["x_max"] = _number(g["x_max"], "grid.x_max")
            if not grid["x_max"] > grid["x_min"]:
                raise ConfigError("'grid.x_max' must exceed 'grid.x_min'", key="grid.x_max")
        cfg.grid = grid
    elif scenario == "oracle":
        cfg.grid = {"n_points": 2048}

    if "cost" in raw:
        c = _section(raw, "cost", _COST_KEYS)
        cfg.cost = {
            "A": _matrix(c.get("A", np.eye(2).tolist()), "cost.A"),
            "E": _matrix(c.get("E", np.eye(2).tolist()), "cost.E"),
            "R": _matrix(c.get("R", np.zeros((2, 2)).tolist()), "cost.R"),
        }
        if abs(np.linalg.det(cfg.cost["E"])) < 1e-14:
            raise ConfigError("'cost.E' must be invertible", key="cost.E")
    elif scenario in CONTROL_SCENARIOS:
        cfg.cost = {"A": np.eye(2).tolist(), "E": np.eye(2).tolist(), "R": np.zeros((2, 2)).tolist()}

    if "controls" in raw:
        c = _section(raw, "controls", _CONTROL_KEYS)
        cfg.controls = {k: _number(c.get(k, 0.0), f"controls.{k}") for k in ("f", "v")}
    if "n_traj" in raw:
        cfg.n_traj = _integer(raw["n_traj"], "n_traj", 2)
    if "outputs" in raw:
        o = _section(raw, "outputs", _OUTPUT_KEYS)
        for k, v in o.items():
            if v is not None and not isinstance(v, str):
                raise ConfigError(f"'outputs.{k}' must be a file name or null", key=f"outputs.{k}")
        cfg.outputs = {"summary": "summary.json", **o}
    if "scheme" in raw:
        if raw["scheme"] not in ("exponential", "euler"):
            raise ConfigError("'scheme' must be 'exponential' or 'euler'", key="scheme")
        cfg.scheme = raw["scheme"]
    if "record_every" in raw:
        cfg.record_every = _integer(raw["record_every"], "record_every", 1)
    if "gain_scale" in raw:
        cfg.gain_scale = _number(raw["gain_scale"], "gain_scale", positive=True)
    if "n_check" in raw:
        cfg.n_check = _integer(raw["n_check"], "n_check", 1)
    if "box" in raw:
        b = _section(raw, "box", _BOX_KEYS)
        box = {"t_min": 0.0, "t_max": T, "x_halfwidth": 2.0}
        for k, v in b.items():
            box[k] = _number(v, f"box.{k}")
        if not 0.0 <= box["t_min"] < box["t_max"] <= T:
            raise ConfigError("'box' needs 0 <= t_min < t_max <= T", key="box.t_min")
        if not box["x_halfwidth"] > 0:
            raise ConfigError("'box.x_halfwidth' must be > 0", key="box.x_halfwidth")
        cfg.box = box
    elif scenario == "hjb-check":
        cfg.box = {"t_min": 0.0, "t_max": T, "x_halfwidth": 2.0}
    return cfg


def load_config(path) -> ScenarioConfig:
    """Read, parse and validate a scenario file.

    Raises :class:`ConfigParseError` for unreadable or malformed JSON and
    :class:`ConfigError` for schema violations.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigParseError(f"{path}: cannot read ({exc.strerror})") from exc
    return validate_config(raw)
