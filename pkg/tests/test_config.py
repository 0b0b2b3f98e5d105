import math

import pytest
from hypothesis import given, strategies as st

from lapsewick.config import (DEFAULTS, TOLERANCES, load_config, parse_angle, parse_complex,
                              preset, preset_data)
from lapsewick.errors import ConfigError

INLINE = """\
geometry:
  dim_space: 1
  periods: [1.0, 1.0]
  lapse:
    constant: 1.0
    modes: [{wave: [0, 1], cos: 0.1}]
  shift: [{constant: 0.2}]
  spatial_metric: [[{constant: 1.0}]]
  potential: {constant: 0.3}
"""


@pytest.mark.parametrize("text,value", [("pi/6", math.pi / 6), ("3*pi/4", 3 * math.pi / 4),
                                        ("pi", math.pi), ("0.25", 0.25), (0.5, 0.5)])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value)


@given(st.complex_numbers(allow_nan=False, allow_infinity=False, max_magnitude=1e6))
def test_parse_complex_roundtrip(z):
    assert parse_complex(repr(z).strip("()")) == pytest.approx(z)


def test_defaults():
    cfg = load_config(text="geometry: flat\n")
    assert cfg.thetas == pytest.approx([math.pi / 6, math.pi / 4, math.pi / 2])
    assert cfg.grid == (24, 24)
    assert cfg.zetas == [0.05, 0.1, 0.05 + 0.02j]
    assert cfg.order == 1 and cfg.seed == 0 and cfg.tol_profile == "default"
    assert cfg.resolvent_samples == 50
    assert cfg.echo()["geometry"] == "flat"


def test_overrides_and_strict_profile():
    cfg = load_config(text="geometry: curved\n", overrides={
        "grid": [8, 10], "theta": ["pi/3"], "seed": 4, "order": 2, "tol_profile": "strict"})
    assert cfg.grid == (8, 10) and cfg.thetas == pytest.approx([math.pi / 3])
    assert cfg.seed == 4 and cfg.order == 2
    assert cfg.tolerances["contract"] == pytest.approx(TOLERANCES["default"]["contract"] / 10)
    assert cfg.tolerances["gap_ratio"] == TOLERANCES["default"]["gap_ratio"]


def test_tolerance_override():
    cfg = load_config(text="geometry: flat\ntolerances:\n  contour: 1.0e-6\n")
    assert cfg.tolerances["contour"] == 1e-6


def test_all_tolerances_positive():
    for prof in TOLERANCES.values():
        assert all(v > 0 for v in prof.values())


def test_inline_geometry():
    cfg = load_config(text=INLINE)
    assert cfg.geometry_name == "inline"
    assert cfg.geometry.shift[0].constant == 0.2
    assert cfg.geometry.potential.constant == 0.3


def test_presets_load():
    for name in preset_data():
        preset(name).validate()


@pytest.mark.parametrize("text,line,fragment", [
    ("geometry: flat\ngrid: [24, -3]\n", 2, "grid"),
    ("geometry: flat\nbogus: 1\n", 2, "unknown key"),
    ("seed: 1\ngeometry: nope\n", 2, "unknown geometry preset"),
    ("geometry: flat\ntheta: [pi/2, 7]\n", 2, "theta"),
    ("geometry: flat\nzeta: [0]\n", 2, "nonzero"),
    ("geometry: flat\ntol_profile: lax\n", 2, "tol_profile"),
    ("geometry: flat\ntolerances:\n  contour: -1\n", 3, "positive"),
    ("geometry: flat\nlimit:\n  theta: [0.1, 0.2]\n", 3, "decreasing"),
    ("geometry: [\n", None, "YAML"),
])
def test_schema_errors_carry_line(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        load_config(text=text)
    msg = str(err.value)
    assert fragment in msg
    if line is not None:
        assert msg.startswith(f"line {line}:")
    assert err.value.code == "config-schema"


def test_inline_geometry_errors():
    bad = INLINE.replace("periods: [1.0, 1.0]", "periods: [1.0]")
    with pytest.raises(ConfigError):
        load_config(text=bad)
    neg = INLINE.replace("constant: 0.3", "constant: -0.3")
    with pytest.raises(ConfigError) as err:
        load_config(text=neg)
    assert "line" in str(err.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml")


def test_defaults_keys_documented():
    assert set(DEFAULTS) >= {"theta", "grid", "zeta", "order", "seed", "tol_profile"}
