"""Run configuration: YAML schema, geometry presets and tolerance profiles.

Schema (all keys optional except ``geometry``)::

    geometry: curved            # preset name, or an inline mapping (see presets)
    theta: [pi/6, pi/4, pi/2]   # numbers or expressions 'a*pi/b'
    grid: [24, 24]
    zeta: [0.05, 0.1, 0.05+0.02j]
    order: 1
    seed: 0
    tol_profile: default        # or strict
    tolerances: {contract: 1e-10}
    resolvent: {samples: 50}
    fit: {enabled: true, geometry: curved, sizes: [64, 128], point: [0, 0],
          theta: [pi/2, pi/3], count: 8, remainder_order: 1}
    smoothing: {size: 64, theta: pi/3, count: 10}
    limit: {s: [0.25, 0.5], theta: [0.4, 0.2, 0.1, 0.05], probes: 3, rank: 2}
"""

from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import yaml

from .errors import ConfigError, InvalidGeometryError
from .geometry import AdmField, FourierField, FourierMode

TOLERANCES = {
    "default": {
        "wedge_angle": 1e-9,
        "fourier_match": 1e-10,
        "resolvent_sharp_slack": 1e-8,
        "resolvent_sector_slack": 0.1,
        "contract": 1e-10,
        "contour": 1e-8,
        "eikonal_closed_form": 1e-10,
        "slope_margin": 0.5,
        "transport_flat": 1e-10,
        "a1_oracle": 1e-8,
        "fit_A0": 0.02,
        "fit_A1": 0.05,
        "remainder_margin": 0.5,
        "hermiticity": 1e-10,
        "chapman_kolmogorov": 1e-9,
        "reproduction": 1e-10,
        "heat_order_margin": 0.5,
        "gap_ratio": 1 / 3,
        "flat_gap": 1e-10,
        "smoothing_margin": 0.5,
        "unitarity": 1e-11,
    },
}
# strict: equality tolerances tightened tenfold; structural margins unchanged
_STRICT_KEYS = ("wedge_angle", "fourier_match", "contract", "contour", "eikonal_closed_form",
                "transport_flat", "a1_oracle", "hermiticity", "chapman_kolmogorov",
                "reproduction", "flat_gap", "unitarity")
TOLERANCES["strict"] = {k: (v / 10 if k in _STRICT_KEYS else v)
                        for k, v in TOLERANCES["default"].items()}

DEFAULTS = {
    "theta": ["pi/6", "pi/4", "pi/2"],
    "grid": [24, 24],
    "zeta": [0.05, 0.1, "0.05+0.02j"],
    "order": 1,
    "seed": 0,
    "tol_profile": "default",
    "tolerances": {},
    "resolvent": {"samples": 50},
    "fit": {"enabled": True, "geometry": "curved", "sizes": [64, 128], "point": [0.0, 0.0],
            "theta": ["pi/2", "pi/3"], "count": 8, "remainder_order": 1},
    "smoothing": {"size": 64, "theta": "pi/3", "count": 10},
    "limit": {"s": [0.25, 0.5], "theta": [0.4, 0.2, 0.1, 0.05], "probes": 3, "rank": 2},
}

_ANGLE = re.compile(r"^\s*(?:(\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_angle(value) -> float:
    """``0.5``, ``'pi/4'``, ``'2*pi/3'`` or ``'pi'`` to float radians."""
    if isinstance(value, bool):
        raise ValueError("boolean is not an angle")
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    m = _ANGLE.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    return float(text)


def parse_complex(value) -> complex:
    if isinstance(value, bool):
        raise ValueError("boolean is not a number")
    if isinstance(value, (int, float, complex)):
        return complex(value)
    return complex(str(value).replace(" ", "").replace("i", "j"))


# ---------------------------------------------------------------------------
# YAML with line numbers


class _Lines(dict):
    """Maps key paths (tuples) to 1-based source lines."""


def _to_python(node, path, lines: _Lines):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            out[key] = _to_python(v, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def load_yaml_with_lines(text: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ConfigError(f"{where}YAML syntax error: {exc}") from exc
    lines = _Lines()
    if node is None:
        return {}, lines
    return _to_python(node, (), lines), lines


def _fail(lines: _Lines, path, msg: str):
    line = None
    p = tuple(path)
    while p and p not in lines:
        p = p[:-1]
    line = lines.get(p)
    where = f"line {line}: " if line else ""
    raise ConfigError(f"{where}{'.'.join(map(str, path)) or '<root>'}: {msg}")


# ---------------------------------------------------------------------------
# geometry


def _field(data, path, lines, D) -> FourierField:
    if isinstance(data, (int, float)) and not isinstance(data, bool):
        return FourierField(float(data))
    if not isinstance(data, dict):
        _fail(lines, path, "a field must be a number or a mapping with constant/modes")
    unknown = set(data) - {"constant", "modes"}
    if unknown:
        _fail(lines, path, f"unknown keys {sorted(unknown)}")
    const = data.get("constant", 0.0)
    if not isinstance(const, (int, float)) or isinstance(const, bool):
        _fail(lines, path + ("constant",), "constant must be a number")
    modes = []
    for i, m in enumerate(data.get("modes", []) or []):
        mp = path + ("modes", i)
        if not isinstance(m, dict) or "wave" not in m:
            _fail(lines, mp, "a mode needs 'wave' and optional 'cos'/'sin'")
        wave = m["wave"]
        if (not isinstance(wave, list) or len(wave) != D
                or not all(isinstance(k, int) and not isinstance(k, bool) for k in wave)):
            _fail(lines, mp + ("wave",), f"wave must be a list of {D} integers")
        extra = set(m) - {"wave", "cos", "sin"}
        if extra:
            _fail(lines, mp, f"unknown keys {sorted(extra)}")
        c, s = m.get("cos", 0.0), m.get("sin", 0.0)
        for key, val in (("cos", c), ("sin", s)):
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                _fail(lines, mp + (key,), f"{key} must be a number")
        modes.append(FourierMode(tuple(wave), float(c), float(s)))
    return FourierField(float(const), tuple(modes))


def parse_geometry(data, path=("geometry",), lines=None) -> AdmField:
    lines = lines if lines is not None else _Lines()
    if not isinstance(data, dict):
        _fail(lines, path, "geometry must be a preset name or a mapping")
    need = {"dim_space", "periods", "lapse", "shift", "spatial_metric"}
    missing = need - set(data)
    if missing:
        _fail(lines, path, f"missing keys {sorted(missing)}")
    extra = set(data) - need - {"potential"}
    if extra:
        _fail(lines, path, f"unknown keys {sorted(extra)}")
    d = data["dim_space"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        _fail(lines, path + ("dim_space",), "dim_space must be an integer >= 1")
    D = d + 1
    per = data["periods"]
    if (not isinstance(per, list) or len(per) != D
            or not all(isinstance(p, (int, float)) and not isinstance(p, bool) and p > 0
                       for p in per)):
        _fail(lines, path + ("periods",), f"periods must be {D} positive numbers")
    shift = data["shift"]
    if not isinstance(shift, list) or len(shift) != d:
        _fail(lines, path + ("shift",), f"shift must be a list of {d} fields")
    gm = data["spatial_metric"]
    if not isinstance(gm, list) or len(gm) != d or any(not isinstance(r, list) or len(r) != d
                                                       for r in gm):
        _fail(lines, path + ("spatial_metric",), f"spatial_metric must be a {d}x{d} list")
    try:
        adm = AdmField(
            d, tuple(float(p) for p in per),
            _field(data["lapse"], path + ("lapse",), lines, D),
            tuple(_field(s, path + ("shift", i), lines, D) for i, s in enumerate(shift)),
            tuple(tuple(_field(gm[a][b], path + ("spatial_metric", a, b), lines, D)
                        for b in range(d)) for a in range(d)),
            _field(data.get("potential", 0.0), path + ("potential",), lines, D))
        adm.validate()
    except InvalidGeometryError as exc:
        _fail(lines, path, str(exc))
    return adm


def preset_data() -> dict:
    text = resources.files("lapsewick").joinpath("presets/geometries.yaml").read_text("utf-8")
    return yaml.safe_load(text)


def preset(name: str) -> AdmField:
    data = preset_data()
    if name not in data:
        raise ConfigError(f"unknown geometry preset {name!r}; available: {sorted(data)}")
    return parse_geometry(data[name], ("preset", name))


# ---------------------------------------------------------------------------
# run configuration


def _preset_at(lines, path, name):
    try:
        return preset(name)
    except ConfigError as exc:
        _fail(lines, path, str(exc))


@dataclass
class RunConfig:
    geometry_name: str
    geometry: AdmField
    thetas: list
    grid: tuple
    zetas: list
    order: int
    seed: int
    tol_profile: str
    tolerances: dict
    resolvent_samples: int
    fit: dict
    smoothing: dict
    limit: dict
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return copy.deepcopy(self.raw)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _positive_ints(lines, path, value, count=None):
    if (not isinstance(value, list) or (count is not None and len(value) != count)
            or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in value)):
        what = f"{count} " if count else ""
        _fail(lines, path, f"expected a list of {what}positive integers")
    return [int(v) for v in value]


def _angles(lines, path, value):
    vals = value if isinstance(value, list) else [value]
    out = []
    for i, v in enumerate(vals):
        try:
            out.append(parse_angle(v))
        except (TypeError, ValueError):
            _fail(lines, path + (i,), f"cannot parse angle {v!r}")
    return out


def build_config(data: dict, lines: _Lines | None = None, overrides: dict | None = None) -> RunConfig:
    """Validate a parsed mapping (plus CLI overrides) into a :class:`RunConfig`."""
    lines = lines if lines is not None else _Lines()
    if not isinstance(data, dict):
        _fail(lines, (), "the configuration must be a mapping")
    known = set(DEFAULTS) | {"geometry", "out"}
    extra = set(data) - known
    if extra:
        _fail(lines, (sorted(extra)[0],), "unknown key")
    if "geometry" not in data:
        _fail(lines, (), "missing required key 'geometry'")
    raw = _merge(DEFAULTS, data)
    raw = _merge(raw, {k: v for k, v in (overrides or {}).items() if v is not None})
    geo = raw["geometry"]
    if isinstance(geo, str):
        name, adm = geo, _preset_at(lines, ("geometry",), geo)
    else:
        name, adm = "inline", parse_geometry(geo, ("geometry",), lines)
    thetas = _angles(lines, ("theta",), raw["theta"])
    for i, t in enumerate(thetas):
        if not (0 < t <= math.pi):
            _fail(lines, ("theta", i), "theta must lie in (0, pi]")
    grid = tuple(_positive_ints(lines, ("grid",), raw["grid"], adm.dim))
    if min(grid) < 3:
        _fail(lines, ("grid",), "grid sizes must be >= 3")
    zetas = []
    zv = raw["zeta"] if isinstance(raw["zeta"], list) else [raw["zeta"]]
    for i, z in enumerate(zv):
        try:
            zc = parse_complex(z)
        except (TypeError, ValueError):
            _fail(lines, ("zeta", i), f"cannot parse {z!r} as a complex number")
        if zc == 0:
            _fail(lines, ("zeta", i), "zeta must be nonzero")
        zetas.append(zc)
    order = raw["order"]
    if not isinstance(order, int) or isinstance(order, bool) or order < 0:
        _fail(lines, ("order",), "order must be a non-negative integer")
    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        _fail(lines, ("seed",), "seed must be an integer")
    prof = raw["tol_profile"]
    if prof not in TOLERANCES:
        _fail(lines, ("tol_profile",), f"tol_profile must be one of {sorted(TOLERANCES)}")
    tols = dict(TOLERANCES[prof])
    over = raw["tolerances"] or {}
    if not isinstance(over, dict):
        _fail(lines, ("tolerances",), "tolerances must be a mapping")
    for k, v in over.items():
        if k not in tols:
            _fail(lines, ("tolerances", k), "unknown tolerance")
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            _fail(lines, ("tolerances", k), "tolerances must be positive numbers")
        tols[k] = float(v)
    res = raw["resolvent"]
    if not isinstance(res.get("samples"), int) or res["samples"] < 1:
        _fail(lines, ("resolvent", "samples"), "samples must be a positive integer")
    fit = dict(raw["fit"])
    fit["sizes"] = _positive_ints(lines, ("fit", "sizes"), fit["sizes"])
    if len(fit["sizes"]) < 2:
        _fail(lines, ("fit", "sizes"), "at least two grid sizes are needed")
    fit["theta"] = _angles(lines, ("fit", "theta"), fit["theta"])
    if not isinstance(fit.get("point"), list):
        _fail(lines, ("fit", "point"), "point must be a list of coordinates")
    fit["point"] = [float(v) for v in fit["point"]]
    fit["adm"] = _preset_at(lines, ("fit", "geometry"), fit["geometry"]) if isinstance(fit["geometry"], str) else parse_geometry(
        fit["geometry"], ("fit", "geometry"), lines)
    sm = dict(raw["smoothing"])
    sm["theta"] = _angles(lines, ("smoothing", "theta"), sm["theta"])[0]
    lim = dict(raw["limit"])
    lim["theta"] = _angles(lines, ("limit", "theta"), lim["theta"])
    if any(b >= a for a, b in zip(lim["theta"], lim["theta"][1:])) or min(lim["theta"]) <= 0:
        _fail(lines, ("limit", "theta"), "limit angles must be positive and decreasing")
    s_list = lim["s"] if isinstance(lim["s"], list) else [lim["s"]]
    if any(not isinstance(s, (int, float)) or s < 0 for s in s_list):
        _fail(lines, ("limit", "s"), "s values must be non-negative numbers")
    lim["s"] = [float(s) for s in s_list]
    return RunConfig(name, adm, thetas, grid, zetas, int(order), int(seed), prof, tols,
                     int(res["samples"]), fit, sm, lim, raw)


def load_config(path=None, text: str | None = None, overrides: dict | None = None) -> RunConfig:
    if text is None:
        if path is None:
            raise ConfigError("either a path or text is required")
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    data, lines = load_yaml_with_lines(text)
    return build_config(data, lines, overrides)
