"""Scenario files: JSON parsing, serialization and the bundled examples.

Schema (all times in seconds, vehicle numbers 1-based)::

    {
      "vehicles": [{"tau": 0.5, "length": 2.5, "standstill": 6.0, "headway": 1.0}, ...],
      "dt": 0.5, "duration_s": 400.0, "v_d": 27.78, "k_m": 40, "horizon": 20,
      "human_gain": 1.0,
      "weights": {"q1": 1, "q2": 1, "q3": 1, "q4": 1, "r": 2},
      "constraints": {"d_min": 2, "d_max": 130, "v_min": 0, "v_max": 27.8,
                      "a_min": -6, "a_max": 3},
      "events": [{"time": 100, "kind": "takeover", "vehicle": 3,
                  "profile": [[100, 0.0], [150, 11.0]]},
                 {"time": 250, "kind": "release", "vehicle": 3},
                 {"time": 320, "kind": "set_headway", "vehicle": 2, "headway": 3.0}],
      "initial": {"positions": [...], "velocities": [...], "accelerations": [...]},
      "noise": {"seed": 0, "covariance": [...]}
    }

Only ``vehicles`` is required. Unknown keys are rejected so typos surface.
"""
from __future__ import annotations

import hashlib
from importlib import resources
import json
import math
from pathlib import Path

from .costfn import ConstraintSpec, CostWeights
from .dynamics import VehicleParams
from .errors import InvalidParameterError, ScenarioError
from .sim import SET_HEADWAY, TAKEOVER, Event, InitialState, NoiseSpec, Scenario

BUNDLED = ("paper_study",)

_TOP_KEYS = {"vehicles", "dt", "duration_s", "v_d", "k_m", "horizon", "human_gain",
             "weights", "constraints", "events", "initial", "noise"}
_VEHICLE_KEYS = ("tau", "length", "standstill", "headway")
_WEIGHT_KEYS = ("q1", "q2", "q3", "q4", "r")
_CONSTRAINT_KEYS = ("d_min", "d_max", "v_min", "v_max", "a_min", "a_max")
_EVENT_KEYS = {"time", "kind", "vehicle", "profile", "headway"}


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(f"{where}: must be finite")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ScenarioError(f"{where}: expected an integer, got {value!r}")
    return value


def _object(value, where: str, allowed) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(f"{where}: expected an object")
    extra = sorted(set(value) - set(allowed))
    if extra:
        raise ScenarioError(f"{where}: unknown key {extra[0]!r}")
    return value


def _numbers(value, where: str) -> tuple:
    if not isinstance(value, list):
        raise ScenarioError(f"{where}: expected a list of numbers")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def _build(cls, data: dict, keys, where: str):
    kwargs = {k: _number(data[k], f"{where}.{k}") for k in keys if k in data}
    try:
        return cls(**kwargs)
    except InvalidParameterError as exc:
        # name the first field mentioned by the constructor's complaint
        msg = str(exc)
        field_name = next((k for k in keys if msg.startswith(k) or f" {k} " in f" {msg} "), None)
        prefix = f"{where}.{field_name}" if field_name else where
        raise ScenarioError(f"{prefix}: {msg}") from exc


def _event(data, where: str) -> Event:
    data = _object(data, where, _EVENT_KEYS)
    for key in ("time", "kind", "vehicle"):
        if key not in data:
            raise ScenarioError(f"{where}: missing key {key!r}")
    kind = data["kind"]
    if not isinstance(kind, str):
        raise ScenarioError(f"{where}.kind: expected a string")
    profile = ()
    if "profile" in data:
        if not isinstance(data["profile"], list):
            raise ScenarioError(f"{where}.profile: expected a list of [time, velocity] pairs")
        pairs = []
        for i, pair in enumerate(data["profile"]):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ScenarioError(f"{where}.profile[{i}]: expected [time, velocity]")
            pairs.append((_number(pair[0], f"{where}.profile[{i}][0]"),
                          _number(pair[1], f"{where}.profile[{i}][1]")))
        profile = tuple(pairs)
    headway = None
    if data.get("headway") is not None:
        headway = _number(data["headway"], f"{where}.headway")
    return Event(_number(data["time"], f"{where}.time"), kind,
                 _integer(data["vehicle"], f"{where}.vehicle"), profile, headway)


def scenario_from_dict(data) -> Scenario:
    """Build and validate a :class:`Scenario` from decoded JSON."""
    data = _object(data, "scenario", _TOP_KEYS)
    if "vehicles" not in data:
        raise ScenarioError("scenario: missing key 'vehicles'")
    if not isinstance(data["vehicles"], list) or not data["vehicles"]:
        raise ScenarioError("vehicles: expected a non-empty list")
    vehicles = []
    for i, v in enumerate(data["vehicles"]):
        where = f"vehicles[{i}]"
        v = _object(v, where, _VEHICLE_KEYS)
        if "tau" not in v:
            raise ScenarioError(f"{where}: missing key 'tau'")
        vehicles.append(_build(VehicleParams, v, _VEHICLE_KEYS, where))
    kwargs: dict = {"vehicles": tuple(vehicles)}
    for key, name in (("dt", "dt"), ("duration_s", "duration"), ("v_d", "v_d"),
                      ("human_gain", "human_gain")):
        if key in data:
            kwargs[name] = _number(data[key], key)
    for key in ("k_m", "horizon"):
        if key in data:
            kwargs[key] = _integer(data[key], key)
            if kwargs[key] < 1:
                raise ScenarioError(f"{key}: must be >= 1")
    if "weights" in data:
        kwargs["weights"] = _build(CostWeights, _object(data["weights"], "weights", _WEIGHT_KEYS),
                                   _WEIGHT_KEYS, "weights")
    if "constraints" in data:
        kwargs["constraints"] = _build(
            ConstraintSpec, _object(data["constraints"], "constraints", _CONSTRAINT_KEYS),
            _CONSTRAINT_KEYS, "constraints")
    if "events" in data:
        if not isinstance(data["events"], list):
            raise ScenarioError("events: expected a list")
        kwargs["events"] = tuple(_event(e, f"events[{i}]") for i, e in enumerate(data["events"]))
    if data.get("initial") is not None:
        init = _object(data["initial"], "initial", ("positions", "velocities", "accelerations"))
        if "positions" not in init:
            raise ScenarioError("initial: missing key 'positions'")
        kwargs["initial"] = InitialState(
            _numbers(init["positions"], "initial.positions"),
            _numbers(init["velocities"], "initial.velocities") if "velocities" in init else None,
            _numbers(init["accelerations"], "initial.accelerations") if "accelerations" in init else None,
        )
    if data.get("noise") is not None:
        noise = _object(data["noise"], "noise", ("seed", "covariance"))
        if "covariance" not in noise:
            raise ScenarioError("noise: missing key 'covariance'")
        cov = _numbers(noise["covariance"], "noise.covariance")
        if any(c < 0 for c in cov):
            raise ScenarioError("noise.covariance: variances must be >= 0")
        kwargs["noise"] = NoiseSpec(_integer(noise.get("seed", 0), "noise.seed"), cov)
    scenario = Scenario(**kwargs)
    if not math.isfinite(scenario.dt) or scenario.dt <= 0:
        raise ScenarioError("dt: must be positive")
    scenario.validate()
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict:
    """Inverse of :func:`scenario_from_dict`; every field is written explicitly."""
    events = []
    for e in scenario.events:
        item = {"time": e.time, "kind": e.kind, "vehicle": e.vehicle}
        if e.kind == TAKEOVER:
            item["profile"] = [[t, v] for t, v in e.profile]
        if e.kind == SET_HEADWAY:
            item["headway"] = e.headway
        events.append(item)
    out = {
        "vehicles": [{k: getattr(v, k) for k in _VEHICLE_KEYS} for v in scenario.vehicles],
        "dt": scenario.dt,
        "duration_s": scenario.duration,
        "v_d": scenario.v_d,
        "k_m": scenario.k_m,
        "horizon": scenario.horizon,
        "human_gain": scenario.human_gain,
        "weights": {k: getattr(scenario.weights, k) for k in _WEIGHT_KEYS},
        "constraints": {k: getattr(scenario.constraints, k) for k in _CONSTRAINT_KEYS},
        "events": events,
    }
    if scenario.initial is not None:
        init = {"positions": list(scenario.initial.positions)}
        if scenario.initial.velocities is not None:
            init["velocities"] = list(scenario.initial.velocities)
        if scenario.initial.accelerations is not None:
            init["accelerations"] = list(scenario.initial.accelerations)
        out["initial"] = init
    if scenario.noise is not None:
        out["noise"] = {"seed": scenario.noise.seed, "covariance": list(scenario.noise.covariance)}
    return out


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc


def dumps_scenario(scenario: Scenario) -> str:
    # json writes floats with repr, which round-trips doubles exactly
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def load_scenario(path) -> Scenario:
    """Read a scenario file, or a bundled scenario when ``path`` is a bundled name."""
    if str(path) in BUNDLED and not Path(path).exists():
        return bundled_scenario(str(path))
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from exc
    return parse_scenario(text, str(path))


def bundled_scenario_text(name: str) -> str:
    if name not in BUNDLED:
        raise ScenarioError(f"unknown bundled scenario {name!r}; choose from {', '.join(BUNDLED)}")
    return resources.files("platoon_mpc").joinpath("scenarios", f"{name}.json").read_text("utf-8")


def bundled_scenario(name: str = "paper_study") -> Scenario:
    return parse_scenario(bundled_scenario_text(name), name)


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical serialization."""
    canon = json.dumps(scenario_to_dict(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
