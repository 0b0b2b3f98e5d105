import csv
import json
import subprocess
import sys

import pytest

from lapsewick.cli_report import Verdict, build_parser, check, run

SMALL = """\
geometry: {geo}
grid: [8, 8]
theta: [pi/4, pi/2]
resolvent: {{samples: 4}}
fit: {{enabled: false}}
smoothing: {{size: 32, count: 6}}
limit: {{probes: 1, s: [0.25]}}
"""


def _write(tmp_path, geo="flat", extra=""):
    p = tmp_path / f"{geo}.yaml"
    p.write_text(SMALL.format(geo=geo) + extra)
    return str(p)


def _manifest(out):
    with open(out / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


def test_parser_flags():
    a = build_parser().parse_args(["spectrum", "--grid", "8x8", "--theta", "pi/4,pi/2",
                                   "--tol-profile", "strict", "--seed", "3", "--order", "2"])
    assert a.command == "spectrum" and a.tol_profile == "strict" and a.seed == 3


def test_check_relations():
    assert check("s", "n", 1e-12, 1e-10).passed
    assert not check("s", "n", 1e-9, 1e-10).passed
    assert check("s", "n", 9.8, 9.5, ">=").passed
    assert not check("s", "n", float("nan"), 1.0).passed
    v = Verdict("s", "n", True, 0.2, 1 / 3, "<")
    assert v.margin == pytest.approx(1 / 3 - 0.2)


def test_spectrum_flat_passes(tmp_path, capsys):
    out = tmp_path / "out"
    code = run(["spectrum", "--config", _write(tmp_path), "--out", str(out)])
    assert code == 0
    m = _manifest(out)
    assert m["passed"] and m["error_code"] is None
    names = [v["name"] for v in m["verdicts"]]
    assert "wedge[theta=0.785398]" in names and "real_nonpositive[theta=pi/2]" in names
    assert any(n.startswith("fourier_oracle") for n in names)
    assert set(m["acceptance"]) == {"1", "2"}
    assert "PASS spectrum/wedge" in capsys.readouterr().out
    rows = list(csv.reader(open(out / "spectrum_theta0p785398.csv", encoding="utf-8")))
    assert rows[0] == ["re", "im"] and len(rows) == 65
    assert m["started"].endswith("+00:00") and "T" in m["started"]


def test_outputs_deterministic(tmp_path):
    cfg = _write(tmp_path, "curved_torus")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["spectrum", "--config", cfg, "--out", str(a)]) == 0
    assert run(["spectrum", "--config", cfg, "--out", str(b)]) == 0
    files = _manifest(a)["files"]
    assert files == _manifest(b)["files"]
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_coefficients_flat_potential(tmp_path):
    out = tmp_path / "o"
    assert run(["coefficients", "--config", _write(tmp_path, "flat_potential"),
                "--out", str(out)]) == 0
    names = [v["name"] for v in _manifest(out)["verdicts"]]
    assert "flat_constant_potential" in names and "eikonal_residual_exact[L=10]" in names


def test_coefficients_flat_zero_potential(tmp_path):
    out = tmp_path / "o"
    assert run(["coefficients", "--config", _write(tmp_path), "--out", str(out)]) == 0
    assert "flat_zero_potential" in [v["name"] for v in _manifest(out)["verdicts"]]


def test_coefficients_curved(tmp_path):
    out = tmp_path / "o"
    assert run(["coefficients", "--config", _write(tmp_path, "curved"), "--theta", "pi/2",
                "--out", str(out)]) == 0
    m = _manifest(out)
    assert set(m["acceptance"]) == {"4", "5"}
    assert any(v["name"].startswith("a1_oracle") for v in m["verdicts"])


def test_kernel_small(tmp_path):
    out = tmp_path / "o"
    code = run(["kernel", "--config", _write(tmp_path, "curved_torus"), "--out", str(out)])
    m = _manifest(out)
    failed = [v["name"] for v in m["verdicts"] if not v["passed"]]
    assert code == 0, failed
    names = {v["name"].split("[")[0] for v in m["verdicts"]}
    assert {"hermiticity", "chapman_kolmogorov", "heat_residual_order"} <= names


def test_limit_small(tmp_path):
    out = tmp_path / "o"
    assert run(["limit", "--config", _write(tmp_path, "curved_torus"), "--grid", "16x16",
                "--out", str(out)]) == 0
    assert "8" in _manifest(out)["acceptance"]


@pytest.mark.parametrize("text", ["geometry: flat\ngrid: [8, -8]\n", "grid: [8, 8]\n",
                                  "geometry: flat\nunknown: 3\n"])
def test_malformed_config_exit_code(tmp_path, capsys, text):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    out = tmp_path / "o"
    assert run(["spectrum", "--config", str(p), "--out", str(out)]) == 2
    m = _manifest(out)
    assert m["error_code"] == "config-schema" and not m["passed"]
    assert m["error"].startswith("line ")
    assert "config-schema" in capsys.readouterr().err


def test_narrow_smoothing_window(tmp_path):
    cfg = _write(tmp_path, "curved_torus", extra="")
    text = open(cfg).read().replace("size: 32", "size: 16")
    open(cfg, "w").write(text)
    out = tmp_path / "o"
    assert run(["kernel", "--config", cfg, "--out", str(out), "--theta", "pi/2"]) == 2
    assert _manifest(out)["error_code"] == "fit-window"


def test_bad_grid_flag(tmp_path):
    out = tmp_path / "o"
    assert run(["spectrum", "--grid", "8by8", "--out", str(out)]) == 2
    assert _manifest(out)["error_code"] == "config-schema"


def test_failing_verdict_exit_one(tmp_path):
    cfg = _write(tmp_path, extra="tolerances: {wedge_angle: 1.0e-300, fourier_match: 1.0e-300}\n")
    out = tmp_path / "o"
    assert run(["spectrum", "--config", cfg, "--out", str(out)]) == 1
    assert not _manifest(out)["passed"]


def test_console_entry_point(tmp_path):
    out = tmp_path / "o"
    res = subprocess.run([sys.executable, "-m", "lapsewick", "spectrum", "--config",
                          _write(tmp_path), "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (out / "manifest.json").exists()
