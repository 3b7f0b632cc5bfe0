"""Flat ``key = value`` run configuration files.

Blank lines and ``#`` comments are ignored. ``N`` is required; every other
key has a default (see ``DEFAULTS``). The coupling is given either directly
as ``C`` or as ``C_as_multiple_of_invN`` (``C = value / N``); with neither,
the quench value ``-8/N`` is used.
"""

from __future__ import annotations

import dataclasses

from .ensemble import OUTPUT_KINDS, RunPlan
from .errors import ConfigError

_INT = ("M", "n_steps", "n_traj", "n_batches", "master_seed", "snapshot_stride", "g1_stride",
        "block_size")
_FLOAT = ("N", "C", "C_as_multiple_of_invN", "L", "t_final")
_BOOL = ("deterministic_reduction",)
_STR = ("grid_mode", "output_dir", "nan_check")
_LIST = ("outputs",)
KEYS = _INT + _FLOAT + _BOOL + _STR + _LIST

DEFAULTS = {
    "C": "-8/N", "M": 256, "L": 20.0, "t_final": 5.0, "n_steps": 10_000, "n_traj": 1000,
    "n_batches": 10, "master_seed": 0, "snapshot_stride": 50, "g1_stride": 20,
    "grid_mode": "balanced", "deterministic_reduction": True, "outputs": ",".join(OUTPUT_KINDS),
    "output_dir": "output", "block_size": 250, "nan_check": "snapshot",
}


def schema() -> str:
    """Human-readable list of accepted keys and defaults."""
    lines = ["config keys (key = value):", "  N (required)"]
    for key in KEYS:
        if key == "N":
            continue
        default = DEFAULTS.get(key, "-")
        lines.append(f"  {key} (default {default})")
    return "\n".join(lines)


def _convert(key, raw, where=""):
    try:
        if key in _INT:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if key in _FLOAT:
            return float(raw)
        if key in _BOOL:
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if key in _LIST:
            return tuple(item.strip() for item in str(raw).split(",") if item.strip())
        return str(raw).strip()
    except ValueError:
        raise ConfigError(f"{where}invalid value for {key}: {raw!r}") from None


def parse_config(text: str) -> dict:
    """Parse config text into typed values; unknown keys and bad lines raise."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, f"line {lineno}: ")
    return values


def plan_from_values(values: dict) -> RunPlan:
    """Build and validate a :class:`RunPlan` from typed config values."""
    values = dict(values)
    if "N" not in values:
        raise ConfigError("missing required key 'N'")
    if "C" in values and "C_as_multiple_of_invN" in values:
        raise ConfigError("give either 'C' or 'C_as_multiple_of_invN', not both")
    N = values.pop("N")
    if not N > 0:
        raise ConfigError(f"invalid value for N: {N} (must be positive)")
    if "C_as_multiple_of_invN" in values:
        values["C"] = values.pop("C_as_multiple_of_invN") / N
    if "deterministic_reduction" in values:
        values["deterministic"] = values.pop("deterministic_reduction")
    try:
        return RunPlan(N=N, **values)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunPlan:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return plan_from_values(parse_config(text))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def plan_values(plan: RunPlan) -> dict:
    """Config-key view of a plan (inverse of :func:`plan_from_values`)."""
    out = {}
    for f in dataclasses.fields(plan):
        if f.name == "noise":
            continue
        value = getattr(plan, f.name)
        key = "deterministic_reduction" if f.name == "deterministic" else f.name
        out[key] = value
    return out


def dump_config(plan: RunPlan) -> str:
    """Config text that parses back to an identical plan."""
    lines = []
    for key, value in plan_values(plan).items():
        if isinstance(value, (tuple, list)):
            value = ",".join(value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
