"""Flat ``key = value`` scenario files with dotted section keys.

Example::

    num_ues = 10
    alpha = 1000000.0
    occupancy.mu = 0.5
    channel.tx_power_dbm = 43.0
    video.encoding_rates = 1000000.0, 2500000.0, 5000000.0

Lines starting with ``#`` or ``;`` are comments. Every key is optional;
omitted keys take the defaults of the corresponding dataclass.
"""

from __future__ import annotations

import configparser
import logging
import math
from pathlib import Path
from typing import Callable

from .channel import ChannelConfig
from .engine import (
    POLICIES,
    OccupancyConfig,
    PlacementConfig,
    ScenarioConfig,
    SolverConfig,
)
from .errors import ConfigError, DomainError
from .quality import VideoProfile

log = logging.getLogger(__name__)

_SECTIONS = {
    "occupancy": OccupancyConfig,
    "channel": ChannelConfig,
    "video": VideoProfile,
    "placement": PlacementConfig,
    "solver": SolverConfig,
}
_HEADER = "scenario"


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _to_int(text: str) -> int:
    val = float(text)
    if not val.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(val)


def _to_float(text: str) -> float:
    val = float(text)
    if math.isnan(val):
        raise ValueError("NaN is not allowed")
    return val


def _optional(conv: Callable, none_word: str) -> Callable:
    def parse(text: str):
        return None if text.strip().lower() == none_word else conv(text)

    return parse


def _float_list(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma separated list of numbers")
    return tuple(_to_float(p) for p in parts)


def _in_range(lo=None, hi=None, lo_open=False):
    def check(v):
        if v is None:
            return
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise ValueError(f"must be {'>' if lo_open else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            raise ValueError(f"must be <= {hi}, got {v}")

    return check


def _one_of(options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}, got {v!r}")

    return check


def _no_check(v):
    return None


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _fmt_optional(none_word: str, fmt: Callable) -> Callable:
    return lambda v: none_word if v is None else fmt(v)


# key -> (parser, formatter, range check)
SCHEMA: dict[str, tuple[Callable, Callable, Callable]] = {
    "num_ues": (_to_int, str, _in_range(1)),
    "num_qsis": (_to_int, str, _in_range(1)),
    "sis_per_qsi": (_to_int, str, _in_range(1)),
    "policy": (str.strip, str, _one_of(POLICIES)),
    "alpha": (_to_float, _fmt_float, _in_range(0.0)),
    "seed": (_to_int, str, _in_range(0)),
    "fading": (_to_bool, lambda v: "true" if v else "false", _no_check),
    "occupancy.model": (str.strip, str, _one_of(("gaussian", "dcf"))),
    "occupancy.mu": (_to_float, _fmt_float, _in_range(0.0, 1.0)),
    "occupancy.sigma2": (_to_float, _fmt_float, _in_range(0.0)),
    "occupancy.n_min": (_to_int, str, _in_range(1)),
    "occupancy.n_max": (_to_int, str, _in_range(1)),
    "occupancy.w_min": (_to_int, str, _in_range(2)),
    "occupancy.max_doublings": (_to_int, str, _in_range(0)),
    "occupancy.mean_pkt_slots": (
        _optional(_to_float, "random"),
        _fmt_optional("random", _fmt_float),
        _in_range(0.0, lo_open=True),
    ),
    "channel.tx_power_dbm": (_to_float, _fmt_float, _no_check),
    "channel.noise_dbm": (_to_float, _fmt_float, _no_check),
    "channel.f_l_hz": (_to_float, _fmt_float, _in_range(0.0, lo_open=True)),
    "channel.f_u_hz": (_to_float, _fmt_float, _in_range(0.0, lo_open=True)),
    "channel.shadow_var": (_to_float, _fmt_float, _in_range(0.0)),
    "channel.rb_bandwidth_hz": (_to_float, _fmt_float, _in_range(0.0, lo_open=True)),
    "channel.m_l": (_to_int, str, _in_range(1)),
    "channel.m_u": (_to_int, str, _in_range(1)),
    "video.encoding_rates": (_float_list, lambda v: ", ".join(_fmt_float(x) for x in v), _no_check),
    "placement.side_m": (_to_float, _fmt_float, _in_range(0.0, lo_open=True)),
    "placement.fixed_distance_m": (
        _optional(_to_float, "none"),
        _fmt_optional("none", _fmt_float),
        _in_range(10.0),
    ),
    "solver.rho": (_to_float, _fmt_float, _in_range(0.0, lo_open=True)),
    "solver.tol": (_to_float, _fmt_float, _in_range(0.0, lo_open=True)),
    "solver.max_iter": (_to_int, str, _in_range(1)),
}

# keys the model has no trustworthy default for; omitting them is logged
_WARN_IF_DEFAULTED = ("alpha",)
_WIFI_KEYS = ("occupancy.w_min", "occupancy.max_doublings", "occupancy.mean_pkt_slots")


def _split(key: str) -> tuple[str | None, str]:
    if "." in key:
        section, name = key.split(".", 1)
        return section, name
    return None, key


def parse_value(key: str, text: str):
    """Parse and range-check a single value; raises ConfigError naming ``key``."""
    if key not in SCHEMA:
        raise ConfigError(key, "unknown key")
    conv, _, check = SCHEMA[key]
    try:
        value = conv(text)
        check(value)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None
    return value


def build_config(values: dict) -> ScenarioConfig:
    """Assemble a validated ScenarioConfig from already-parsed ``{dotted_key: value}``."""
    top, nested = {}, {name: {} for name in _SECTIONS}
    for key, value in values.items():
        section, name = _split(key)
        if section is None:
            top[name] = value
        else:
            nested[section][name] = value
    for section, cls in _SECTIONS.items():
        try:
            top[section] = cls(**nested[section])
        except (DomainError, ValueError) as exc:
            raise ConfigError(section, str(exc)) from None
    try:
        return ScenarioConfig(**top)
    except (DomainError, ValueError) as exc:
        raise ConfigError("scenario", str(exc)) from None


def parse_config_text(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_HEADER}]\n{text}", source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(exc.option, "duplicate key") from None
    except configparser.Error as exc:
        raise ConfigError("<syntax>", str(exc).replace("\n", " ")) from None

    raw = dict(parser.items(_HEADER))
    values = {key: parse_value(key, text) for key, text in raw.items()}

    for key in _WARN_IF_DEFAULTED:
        if key not in values:
            log.warning("%s: not set, using default %s", key, SCHEMA[key][1](_default(key)))
    if values.get("occupancy.model", "gaussian") == "dcf":
        for key in _WIFI_KEYS:
            if key not in values:
                log.warning("%s: not set, using default %s", key, SCHEMA[key][1](_default(key)))
    return build_config(values)


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("<file>", f"no such file: {path}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    return parse_config_text(text, str(path))


def config_values(config: ScenarioConfig) -> dict:
    """Flatten a config into ``{dotted_key: value}`` covering every schema key."""
    out = {}
    for key in SCHEMA:
        section, name = _split(key)
        obj = config if section is None else getattr(config, section)
        out[key] = getattr(obj, name)
    return out


def _default(key: str):
    return config_values(ScenarioConfig())[key]


def emit_config(config: ScenarioConfig) -> str:
    """Render every key so that ``parse_config_text(emit_config(c)) == c``."""
    lines = []
    for key, value in config_values(config).items():
        lines.append(f"{key} = {SCHEMA[key][1](value)}")
    return "\n".join(lines) + "\n"


def with_overrides(config: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    """Return a copy of ``config`` with ``{dotted_key: text}`` overrides applied."""
    values = config_values(config)
    for key, text in overrides.items():
        values[key] = parse_value(key, text)
    return build_config(values)
