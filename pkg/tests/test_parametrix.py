import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lapsewick.errors import ContractViolation, OutsideConeError
from lapsewick.lattice import TorusGrid
from lapsewick.parametrix import (bump, eval_parametrix, heat_residual, local_parametrix,
                                  parametrix_prefactor, predicted_diagonal_series,
                                  rotation_factor)

from conftest import constant_adm


@given(st.floats(0.01, math.pi - 0.01), st.integers(1, 4))
def test_rotation_factor_principal_branch(theta, d):
    r = rotation_factor(theta, d)
    assert abs(r) == pytest.approx(1.0)
    assert r == pytest.approx((-1j * cmath.exp(1j * theta)) ** ((d - 1) / 2), abs=1e-12)


@pytest.mark.parametrize("zeta", [0.01, 0.1, 1.0])
def test_flat_diagonal_free_kernel(zeta):
    ev = eval_parametrix(constant_adm(), math.pi / 2, 2, zeta, (0.0, 0.0), (0.0, 0.0))
    assert ev.value == pytest.approx(1 / (4 * math.pi * zeta), rel=1e-13)


@pytest.mark.parametrize("dy", [(0.1, 0.0), (0.05, -0.2), (0.3, 0.3)])
def test_flat_gaussian(dy):
    zeta = 0.05
    ev = eval_parametrix(constant_adm(), math.pi / 2, 1, zeta, dy, (0.0, 0.0))
    expected = math.exp(-(dy[0] ** 2 + dy[1] ** 2) / (4 * zeta)) / (4 * math.pi * zeta)
    assert ev.value == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_flat_constant_potential_truncated_exponential(N):
    V, theta, zeta = 0.5, 0.9, 0.02
    kappa = 1j * cmath.exp(-1j * theta)
    free = eval_parametrix(constant_adm(), theta, N, zeta, (0.0, 0.0), (0.0, 0.0)).value
    val = eval_parametrix(constant_adm(V=V), theta, N, zeta, (0.0, 0.0), (0.0, 0.0)).value
    partial = sum((-V * kappa * zeta) ** n / math.factorial(n) for n in range(N + 1))
    assert val == pytest.approx(free * partial, rel=1e-12)
    assert abs(val / free - cmath.exp(-kappa * V * zeta)) < 2 * (V * zeta) ** (N + 1)


@pytest.mark.parametrize("N", [0, 2])
def test_flat_heat_residual_zero(N):
    for dy in [(0.0, 0.0), (0.1, -0.05)]:
        assert abs(heat_residual(constant_adm(), 1.1, N, 0.03, dy, (0.0, 0.0))) < 1e-11


@pytest.mark.parametrize("N", [0, 1, 2])
def test_heat_residual_scaling(curved_torus, N):
    lp = local_parametrix(curved_torus, 1.0, (0.3, 0.2), N)
    z = np.array([0.7, -0.4])
    zs = np.geomspace(1e-4, 1e-2, 6)
    res = [abs(lp.heat_residual(s, math.sqrt(s) * z)[0]) for s in zs]
    slope = np.polyfit(np.log(zs), np.log(res), 1)[0]
    assert slope == pytest.approx(N + 2 - 1 - 2, abs=0.5)


def test_zeta_derivative_against_differences(curved_torus):
    lp = local_parametrix(curved_torus, 0.8, (0.1, 0.4), 2)
    dy = np.array([0.05, 0.02])
    zeta, h = 0.03, 5e-5
    f = [lp.value(zeta + k * h, dy) for k in (-2, -1, 1, 2)]
    fd = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
    exact = lp.zeta_derivative(zeta, dy)
    assert abs(fd[0] - exact[0]) < 1e-9 * max(1.0, abs(exact[0]))


def test_predicted_series_flat():
    assert predicted_diagonal_series(constant_adm(), 0.7, 3, (0.0, 0.0)) == pytest.approx(
        [1, 0, 0, 0], abs=1e-13)
    V, theta = 0.4, 0.7
    k = 1j * cmath.exp(-1j * theta)
    c = predicted_diagonal_series(constant_adm(V=V), theta, 3, (0.0, 0.0))
    assert c == pytest.approx([(-V * k) ** n / math.factorial(n) for n in range(4)], abs=1e-13)


def test_predicted_series_right_angle_real(curved):
    c = predicted_diagonal_series(curved, math.pi / 2, 2, (0.0, 0.0))
    assert max(abs(v.imag) for v in c) < 1e-12


def test_complex_zeta_in_sector_and_rejection():
    adm = constant_adm()
    ev = eval_parametrix(adm, math.pi / 3, 1, 0.05 + 0.02j, (0.1, 0.0), (0.0, 0.0))
    assert np.isfinite(ev.value)
    with pytest.raises(ContractViolation):
        eval_parametrix(adm, math.pi / 3, 1, 1j, (0.1, 0.0), (0.0, 0.0))
    with pytest.raises(ContractViolation):
        parametrix_prefactor(0.5, 1, 0)


def test_outside_cone_error():
    from lapsewick.geometry import AdmField, FourierField, FourierMode
    F, M = FourierField, FourierMode
    wild = AdmField(1, (1.0, 1.0), F(1.0, (M((0, 1), 0.9),)), (F(0.0, (M((0, 1), 0.8),)),),
                    ((F(1.0, (M((0, 1), 0.9),)),),))
    lp = local_parametrix(wild, 0.3, (0.0, 0.3), 0)
    pts = 0.6 * np.stack([np.cos(np.linspace(0, 2 * np.pi, 64)),
                          np.sin(np.linspace(0, 2 * np.pi, 64))], axis=1)
    assert np.any(lp.s_values(pts).real < 0)
    with pytest.raises(OutsideConeError):
        lp.value(0.05, pts)


def test_bump():
    assert bump(0.0) == pytest.approx(1.0)
    assert np.all(bump(np.array([1.0, 1.5, -2.0])) == 0)


def test_weak_delta_limit(curved_torus):
    adm = curved_torus
    g = TorusGrid((64, 64), adm.periods)
    nodes = g.nodes()
    w = adm.density_values(nodes) * g.cell_volume
    y = nodes[g.nearest_index((math.pi, math.pi))]
    cut = 0.9
    r = np.linalg.norm(nodes - y, axis=1)
    near = np.where(r < cut)[0]
    psi = np.cos(nodes[:, 0]) + 0.5 * np.sin(nodes[:, 1]) + 0.3 * np.cos(nodes.sum(axis=1))
    i = g.nearest_index(y)
    lps = [local_parametrix(adm, 1.0, tuple(nodes[j]), 0) for j in near]
    errs = []
    for zeta in (0.01, 0.02):
        F = np.array([lp.value(zeta, y - nodes[j])[0] for lp, j in zip(lps, near)])
        errs.append(abs(np.sum(F * bump(r[near] / cut) * w[near] * psi[near]) - psi[i]))
    assert errs[0] < 0.1
    assert errs[1] / errs[0] == pytest.approx(2.0, abs=0.5)


def test_near_isometry_flat():
    # flat data: F depends on y - y' only, so the parametrix operator is a periodic convolution
    adm = constant_adm()
    g = TorusGrid((128, 128), adm.periods)
    nodes = g.nodes()
    P = np.asarray(g.periods)
    psi = np.exp(-np.sum((nodes - math.pi) ** 2, axis=1))
    lp = local_parametrix(adm, 1.2, (0.0, 0.0), 0)
    dy = nodes - P * np.round(nodes / P)
    ref = math.sqrt(g.cell_volume * np.sum(psi**2))
    errs = []
    for zeta in (0.04, 0.01, 0.0025):
        kern = (lp.value(zeta, dy, check_cone=False) * g.cell_volume).reshape(g.sizes)
        out = np.fft.ifft2(np.fft.fft2(kern) * np.fft.fft2(psi.reshape(g.sizes)))
        errs.append(abs(math.sqrt(g.cell_volume * np.sum(np.abs(out) ** 2)) - ref))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.01 * ref
