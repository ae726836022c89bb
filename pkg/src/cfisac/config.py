"""INI-style configuration files.

Sections ``[system]``, ``[power]``, ``[channel]``, ``[sensing]`` and
``[layout]`` hold ``key = value`` lines.  Power-like values may carry a unit
(``dBW``, ``dBm``, ``W``, ``mW``) and gains may be given in ``dB``.  Everything
is converted to linear SI values here; nothing downstream sees decibels.
Lists are comma separated.

``R_min`` has no default and must be present.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import asdict, fields
from pathlib import Path

from .scenario import LayoutSpec, SystemConfig


class ConfigError(ValueError):
    """Malformed configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)


def dbw_to_w(x: float) -> float:
    return 10.0 ** (x / 10.0)


def dbm_to_w(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


POWER_UNITS = {"w": lambda x: x, "mw": lambda x: x * 1e-3, "dbw": dbw_to_w, "dbm": dbm_to_w}
GAIN_UNITS = {"": lambda x: x, "db": db_to_linear}
LENGTH_UNITS = {"": lambda x: x, "m": lambda x: x}

# key -> (section, field, kind); kind picks the unit table and cardinality
SCHEMA = {
    "R_min": ("system", "R_min", "float"),
    "M_t": ("system", "M_t", "int"),
    "M_r": ("system", "M_r", "int"),
    "N": ("system", "N", "int"),
    "K": ("system", "K", "int"),
    "Q": ("system", "Q", "int"),
    "L": ("system", "L", "int"),
    "seed": ("system", "seed", "int"),
    "P_m": ("power", "P_m", "power_list"),
    "sigma_k": ("channel", "sigma_k_sq", "power_list"),
    "C0": ("channel", "C0", "gain"),
    "nu": ("channel", "nu", "float"),
    "D0": ("channel", "D0", "length"),
    "sigma_c": ("sensing", "sigma_c_sq", "power_list"),
    "sigma_n": ("sensing", "sigma_n_sq", "power_list"),
    "p_q": ("sensing", "p_q", "float_list"),
    "zeta_sens_sq": ("sensing", "zeta_sens_sq", "gain"),
    "area": ("layout", "area", "length_tuple4"),
    "tx_y": ("layout", "tx_y", "length"),
    "rx_y": ("layout", "rx_y", "length"),
    "ap_x_span": ("layout", "ap_x_span", "length_tuple2"),
    "user_y": ("layout", "user_y", "length"),
    "user_x_span": ("layout", "user_x_span", "length_tuple2"),
    "user_rule": ("layout", "user_rule", "str"),
    "target_center": ("layout", "target_center", "length_tuple2"),
    "target_radius": ("layout", "target_radius", "length"),
}
SECTIONS = ("system", "power", "channel", "sensing", "layout")
LAYOUT_FIELDS = {f.name for f in fields(LayoutSpec)}

_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z]*)\s*$")


def _number(text: str, units: dict, what: str) -> float:
    m = _NUM.match(text)
    if not m:
        raise ValueError(f"{what}: cannot read a number from {text!r}")
    value, unit = float(m.group(1)), m.group(2).lower()
    if unit not in units:
        allowed = ", ".join(u or "(none)" for u in units)
        raise ValueError(f"{what}: unit {m.group(2)!r} not allowed (use {allowed})")
    return float(units[unit](value))


def _convert(kind: str, text: str, key: str):
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    if kind == "int":
        if not re.fullmatch(r"[-+]?\d+", text.strip()):
            raise ValueError(f"{key}: expected an integer, got {text!r}")
        return int(text)
    if kind == "str":
        return text.strip()
    if kind == "float":
        return _number(text, {"": lambda x: x}, key)
    if kind == "gain":
        return _number(text, GAIN_UNITS, key)
    if kind == "length":
        return _number(text, LENGTH_UNITS, key)
    if kind == "float_list":
        vals = tuple(_number(t, {"": lambda x: x}, key) for t in items)
    elif kind == "power_list":
        vals = tuple(_number(t, {**POWER_UNITS, "": lambda x: x}, key) for t in items)
    elif kind.startswith("length_tuple"):
        n = int(kind[-1])
        vals = tuple(_number(t, LENGTH_UNITS, key) for t in items)
        if len(vals) != n:
            raise ValueError(f"{key}: expected {n} values, got {len(vals)}")
        return vals
    else:
        raise AssertionError(kind)
    if not vals:
        raise ValueError(f"{key}: empty value")
    return vals[0] if len(vals) == 1 else vals


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, plus section header lines."""
    out, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:]+)[=:]", line)
        if m:
            out.setdefault((section, m.group(1).strip()), i)
    return out


def parse_config_text(text: str, source: str = "<config>") -> tuple[SystemConfig, LayoutSpec]:
    """Parse configuration text into a :class:`SystemConfig` and a :class:`LayoutSpec`."""
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), source) from None

    sys_kw, lay_kw = {}, {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)), source)
        for key, value in cp.items(section):
            line = lines.get((section, key))
            spec = SCHEMA.get(key)
            if spec is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line, source)
            if spec[0] != section:
                raise ConfigError(f"key {key!r} belongs in [{spec[0]}], not [{section}]", line, source)
            try:
                val = _convert(spec[2], value, key)
            except ValueError as exc:
                raise ConfigError(str(exc), line, source) from None
            (lay_kw if section == "layout" else sys_kw)[spec[1]] = val
    if "R_min" not in sys_kw:
        raise ConfigError("missing required key 'R_min' in [system]", lines.get(("system", None)), source)
    try:
        config = SystemConfig(**sys_kw)
    except ValueError as exc:
        key = next((k for k, s in SCHEMA.items() if s[1] in str(exc).split(":")[0].split()), None)
        line = lines.get((SCHEMA[key][0], key)) if key else None
        raise ConfigError(f"out-of-range value: {exc}", line, source) from None
    try:
        layout = LayoutSpec(**lay_kw)
    except ValueError as exc:
        raise ConfigError(f"invalid layout: {exc}", lines.get(("layout", None)), source) from None
    return config, layout


def parse_config(path) -> tuple[SystemConfig, LayoutSpec]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", None, str(path)) from None
    return parse_config_text(text, str(path))


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(config: SystemConfig, layout: LayoutSpec | None = None) -> str:
    """Write every resolved value in linear units; parsing the result gives the same objects."""
    layout = layout or LayoutSpec()
    values = asdict(config)
    lay = asdict(layout)
    out = []
    for section in SECTIONS:
        out.append(f"[{section}]")
        for key, (sec, fld, kind) in SCHEMA.items():
            if sec != section:
                continue
            v = lay[fld] if section == "layout" else values[fld]
            if kind == "power_list" and isinstance(v, tuple) and len(set(v)) == 1:
                v = v[0]
            if kind == "float_list" and isinstance(v, tuple) and len(set(v)) == 1:
                v = v[0]
            if kind.endswith("_list") and isinstance(v, tuple):
                v = tuple(float(x) for x in v)
            out.append(f"{key} = {_fmt(v)}")
        out.append("")
    return "\n".join(out)
