"""Plain ``key = value`` run configuration with ``[section]`` headers.

Every problem in a file is collected, with its line number, before a
:class:`~capnet.errors.ConfigError` is raised.
"""

from __future__ import annotations

import dataclasses
import difflib
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError, InvalidScenario
from .experiments import SWEPT, SweepSpec
from .scenarios import BUILDERS


def _int_list(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


SCHEMA = {
    "deployment": {"n": int, "M": int, "cell_side": float},
    "interference": {"guard": float, "alpha": float, "beta": float, "noise": float,
                     "range_scale": float, "margin": float},
    "scheduler": {"family": str, "cell_scale": float, "kappa": float, "sender_density": float},
    "flows": {"l": int, "sessions": int},
    "engine": {"T": int, "window": int, "window_per_hop": float, "per_cell": float, "prefill": float},
    "experiment": {"seed": int, "param": str, "values": _int_list, "reps": int, "out": str},
}
REQUIRED = (("scheduler", "family"), ("deployment", "n"))
# keys consumed by the CLI rather than handed to the scenario builder
_RUNNER_KEYS = {"family", "T", "seed", "param", "values", "reps", "out"}
_TYPE_NAMES = {int: "an integer", float: "a number", str: "a string", _int_list: "a list of integers"}


@dataclass
class RunConfig:
    family: str
    knobs: dict = field(default_factory=dict)
    seed: int = 0
    T: Optional[int] = None
    param: Optional[str] = None
    values: tuple = ()
    reps: int = 3
    out: Optional[str] = None
    path: Optional[str] = None

    def sweep_spec(self) -> SweepSpec:
        if self.param is None:
            raise InvalidScenario("no swept parameter: set [experiment] param and values")
        knobs = {k: v for k, v in self.knobs.items() if k != self.param}
        return SweepSpec(self.family, self.param, self.values, self.reps, self.seed, knobs, self.T)


def _all_keys():
    return {k: s for s, keys in SCHEMA.items() for k in keys}


def parse_config_text(text: str, path: Optional[str] = None) -> RunConfig:
    errors = []
    where = f"{path}:" if path else "line "
    values = {}
    lines = {}
    section = None
    all_keys = _all_keys()
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            name = line.strip("[]").strip()
            if not line.endswith("]") or name not in SCHEMA:
                hint = difflib.get_close_matches(name, SCHEMA, n=1)
                errors.append(f"{where}{no}: unknown section [{name}]"
                              + (f"; did you mean [{hint[0]}]?" if hint else ""))
                section = "?"
            else:
                section = name
            continue
        if "=" not in line:
            errors.append(f"{where}{no}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, val = (p.strip() for p in line.split("=", 1))
        if section is None:
            errors.append(f"{where}{no}: key {key!r} appears before any [section] header")
            continue
        if section == "?":
            continue
        if key not in SCHEMA[section]:
            if key in all_keys:
                errors.append(f"{where}{no}: key {key!r} belongs in [{all_keys[key]}], not [{section}]")
            else:
                hint = difflib.get_close_matches(key, list(all_keys), n=1, cutoff=0.5)
                errors.append(f"{where}{no}: unknown key {key!r}"
                              + (f"; did you mean {hint[0]!r}?" if hint else ""))
            continue
        conv = SCHEMA[section][key]
        try:
            v = conv(val)
        except ValueError:
            errors.append(f"{where}{no}: {key} must be {_TYPE_NAMES[conv]}, got {val!r}")
            continue
        if key in values:
            errors.append(f"{where}{no}: duplicate key {key!r} (first set on line {lines[key]})")
            continue
        values[key] = v
        lines[key] = no
    for sec, key in REQUIRED:
        if key not in values:
            errors.append(f"{path or 'config'}: missing required key {key!r} in [{sec}]")
    family = values.get("family")
    if family is not None and family not in BUILDERS:
        hint = difflib.get_close_matches(family, list(BUILDERS), n=1)
        errors.append(f"{where}{lines['family']}: unknown family {family!r}"
                      + (f"; did you mean {hint[0]!r}?" if hint else f"; choose from {sorted(BUILDERS)}"))
        family = None
    if "guard" in values and not values["guard"] > 0:
        errors.append(f"{where}{lines['guard']}: guard must be > 0; under the protocol model the guard "
                      "zone (1 + guard) * r around each receiver must be strictly wider than the "
                      "transmission range, so a zero guard admits colliding transmissions")
    if "param" in values and not values.get("values"):
        errors.append(f"{where}{lines['param']}: a swept param needs a nonempty 'values' list")
    if "param" in values and values["param"] not in SWEPT:
        errors.append(f"{where}{lines['param']}: param must be one of {SWEPT}, got {values['param']!r}")
    knobs = {k: v for k, v in values.items() if k not in _RUNNER_KEYS}
    if family is not None:
        accepted = {f.name for f in dataclasses.fields(BUILDERS[family][0])}
        for k in sorted(knobs, key=lines.get):
            if k not in accepted:
                errors.append(f"{where}{lines[k]}: key {k!r} does not apply to family {family!r}")
        if "param" in values and values["param"] not in accepted:
            errors.append(f"{where}{lines['param']}: family {family!r} cannot sweep {values['param']!r}")
    if errors:
        raise ConfigError(errors)
    return RunConfig(family, knobs, values.get("seed", 0), values.get("T"), values.get("param"),
                     values.get("values", ()), values.get("reps", 3), values.get("out"), path)


def parse_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from exc
    return parse_config_text(text, str(path))
