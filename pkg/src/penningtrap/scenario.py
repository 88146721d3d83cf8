"""Scenario files: YAML with an explicit unit on every physical quantity.

Quantities are strings such as ``"2.5 MHz"``, ``"3 T"`` or ``"152 um"``.
Cyclic frequencies (Hz) are converted to rad/s; values given in ``rad/s``
are kept.  Plain rates such as heating rates (``"0.088 /s"``) are not
multiplied by 2 pi.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import pint
import yaml

_UREG = pint.UnitRegistry()

# kind -> (pint dimensionality, SI unit)
_KINDS = {
    "frequency": ("1/[time]", "Hz"),
    "rate": ("1/[time]", "1/s"),
    "time": ("[time]", "s"),
    "length": ("[length]", "m"),
    "field": ("[mass]/[current]/[time]**2", "T"),
    "voltage": ("[length]**2*[mass]/[current]/[time]**3", "V"),
    "resistance": ("[length]**2*[mass]/[current]**2/[time]**3", "ohm"),
    "capacitance": ("[current]**2*[time]**4/[length]**2/[mass]", "F"),
}


class ScenarioError(ValueError):
    """Invalid scenario: missing fields, bad units or unresolvable references."""


def parse_quantity(text, kind, where="value"):
    """Parse a unit-bearing string into an SI float (rad/s for frequencies)."""
    if kind == "number":
        try:
            return float(text)
        except (TypeError, ValueError):
            raise ScenarioError(f"{where}: expected a number, got {text!r}") from None
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        if text == 0:
            return 0.0
        raise ScenarioError(f"{where}: {text!r} has no unit; write e.g. '{text} {_KINDS[kind][1]}'")
    try:
        q = _UREG.Quantity(str(text).replace("µ", "u"))
    except Exception as exc:
        raise ScenarioError(f"{where}: cannot parse {text!r} ({exc})") from None
    dim, unit = _KINDS[kind]
    if not q.check(dim):
        raise ScenarioError(f"{where}: {text!r} is not a {kind} (expected units like {unit})")
    if kind == "frequency":
        angular = "radian" in str(q.units)
        val = float(q.to("1/s").magnitude)
        return val if angular else 2 * math.pi * val
    return float(q.to(unit).magnitude)


def parse_vector(value, kind, where):
    """A 3-vector written as ``[x, y, z] unit`` or a list of unit strings."""
    if isinstance(value, str):
        head, _, unit = value.partition("]")
        nums = head.strip().lstrip("[").split(",")
        if len(nums) != 3 or not unit.strip():
            raise ScenarioError(f"{where}: expected '[x, y, z] unit', got {value!r}")
        return [parse_quantity(f"{float(n)} {unit.strip()}", kind, where) for n in nums]
    if isinstance(value, list) and len(value) == 3:
        return [parse_quantity(v, kind, f"{where}[{i}]") for i, v in enumerate(value)]
    raise ScenarioError(f"{where}: expected a 3-vector")


# Field schema: dotted path -> (kind, default).  A default of REQUIRED marks a required field.
REQUIRED = object()

COMMON = {
    "species": ("str", REQUIRED),
    "B": ("field", REQUIRED),
    "omega_z": ("frequency", REQUIRED),
    "seed": ("int", 0),
}

SECTIONS = {
    "modes": {},
    "solve": {
        "geometry": ("str", "default"),
        "null": ("vector:length", "[0, 152, 0] um"),
        "v_max": ("voltage", "20 V"),
        "regularization": ("number", 0.0),
    },
    "null": {
        "geometry": ("str", "default"),
        "voltages": ("str", "reference"),
        "guess": ("vector:length", "[0, 152, 0] um"),
    },
    "cool-doppler": {
        "duration": ("time", "800 us"),
        "detuning": ("frequency", "-9.7 MHz"),
        "saturation": ("number", 0.15),
        "drive_amplitude": ("voltage", "30 mV"),
        "axialization": ("bool", True),
        "initial_nbar": ("list:number", [300, 300, 300]),
        "repeats": ("int", 4),
    },
    "cool-sideband": {
        "mode": ("str", "z"),
        "initial_nbar": ("number", 4.4),
        "heating": ("rate", "0.088 /s"),
        "total_time": ("time", "60 ms"),
        "rabi_frequency": ("frequency", "8 kHz"),
        "schedule": ("str", "default"),
    },
    "thermometry": {
        "mode": ("str", "z"),
        "input": ("str", ""),
        "nbar": ("list:number", [0.007, 0.05, 1.0]),
        "probe_time": ("time", "100 us"),
        "rabi_frequency": ("frequency", "8 kHz"),
    },
    "heating": {
        "input": ("str", ""),
        "rate": ("rate", "0.088 /s"),
        "noise": ("number", 0.0),
        "waits": ("list:time", ["0 ms", "50 ms", "100 ms", "150 ms", "200 ms"]),
        "initial_nbar": ("number", 0.007),
    },
    "coherence": {
        "ramsey_time": ("time", "1.9 ms"),
        "sequences": ("list:str", ["ramsey", "uhrig-1", "uhrig-3", "uhrig-5"]),
        "t_max": ("time", "20 ms"),
        "points": ("int", 40),
        "fit_spectrum": ("bool", True),
    },
    "transport": {
        "geometry": ("str", "default"),
        "start": ("vector:length", "[0, 152, 0] um"),
        "end": ("vector:length", "[0, 152, 30] um"),
        "duration": ("time", "300 us"),
        "profile": ("str", "sin2"),
        "knots": ("int", 61),
    },
    "raster": {
        "waypoints": ("str", "default"),
        "transport_time": ("time", "4 ms"),
        "dwell": ("time", "500 us"),
        "repeats": ("int", 172),
        "check_reachable": ("bool", True),
    },
    "isolation": {
        "network": ("str", "default"),
        "points": ("int", 201),
        "fit_parasitics": ("bool", True),
    },
}

COMMANDS_WITHOUT_TRAP = {"raster", "isolation", "coherence"}


def _convert(kind, value, where):
    if kind == "str":
        return str(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(f"{where}: expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ScenarioError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind.startswith("vector:"):
        return parse_vector(value, kind.split(":")[1], where)
    if kind.startswith("list:"):
        if not isinstance(value, list):
            raise ScenarioError(f"{where}: expected a list")
        sub = kind.split(":")[1]
        return [_convert(sub, v, f"{where}[{i}]") for i, v in enumerate(value)]
    return parse_quantity(value, kind, where)


class Scenario:
    """Validated scenario for one subcommand; ``raw`` keeps the file content for hashing."""

    def __init__(self, command, values, raw, base_dir=Path(".")):
        self.command = command
        self.values = values
        self.raw = raw
        self.base_dir = Path(base_dir)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def seed(self):
        return self.values.get("seed", 0)

    def resolve(self, ref):
        p = Path(ref)
        return p if p.is_absolute() else self.base_dir / p

    def digest(self):
        canon = json.dumps({"command": self.command, "scenario": self.raw}, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()


def load_scenario(command, data, base_dir=Path(".")):
    """Validate ``data`` (a mapping) for ``command``; collects every problem before raising."""
    if command not in SECTIONS:
        raise ScenarioError(f"unknown command {command!r}")
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping of fields")
    if None in data:
        # YAML reads a bare ``null:`` key as None
        data = {("null" if k is None else k): v for k, v in data.items()}
    problems = []
    values = {}
    common = {k: v for k, v in COMMON.items()
              if not (command in COMMANDS_WITHOUT_TRAP and k in ("species", "B", "omega_z"))}
    missing = [k for k, (_, d) in common.items() if d is REQUIRED and k not in data]
    if missing:
        problems.append("missing required fields: " + ", ".join(missing))
    for key, (kind, default) in common.items():
        if key in data:
            try:
                values[key] = _convert(kind, data[key], key)
            except ScenarioError as exc:
                problems.append(str(exc))
        elif default is not REQUIRED:
            values[key] = default
    if "species" in values:
        from . import constants as const
        if values["species"] not in const.SPECIES:
            problems.append(f"species: unknown {values['species']!r}; known: {', '.join(sorted(const.SPECIES))}")
    section = data.get(command, {}) or {}
    if not isinstance(section, dict):
        problems.append(f"{command}: expected a mapping")
        section = {}
    schema = SECTIONS[command]
    unknown = sorted(set(section) - set(schema))
    if unknown:
        problems.append(f"{command}: unknown fields {', '.join(unknown)}")
    for key, (kind, default) in schema.items():
        where = f"{command}.{key}"
        raw = section.get(key, default)
        try:
            values[key] = _convert(kind, raw, where)
        except ScenarioError as exc:
            problems.append(str(exc))
    if problems:
        raise ScenarioError("; ".join(problems))
    return Scenario(command, values, copy.deepcopy(data), base_dir)


def read_scenario(command, path):
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f" (line {mark.line + 1})" if mark is not None else ""
        raise ScenarioError(f"{path}: invalid YAML{line}") from None
    return load_scenario(command, data, path.parent)


DEFAULT_SCENARIO = {"species": "Be9", "B": "3 T", "omega_z": "2.5 MHz", "seed": 0}
