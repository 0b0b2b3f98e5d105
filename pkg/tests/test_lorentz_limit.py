import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from lapsewick.errors import ContractViolation
from lapsewick.lattice import LORENTZIAN, TorusGrid, assemble_parts, operator_from_parts
from lapsewick.lorentz_limit import (SchrodingerGroup, TraceProbe, flat_gap_closed_form,
                                     flat_trace_closed_form, gap_scan, random_probe,
                                     schrodinger_group, semigroup_images, trace_gap)

from conftest import constant_adm


@pytest.fixture(scope="module")
def torus_parts(curved_torus):
    return assemble_parts(TorusGrid((16, 16), curved_torus.periods), curved_torus)


def test_probe_validation():
    u = np.ones((2, 4))
    with pytest.raises(ContractViolation):
        TraceProbe(u, np.ones((1, 4)), 0.5)
    with pytest.raises(ContractViolation):
        TraceProbe(u, u, -1.0)
    with pytest.raises(ContractViolation):
        TraceProbe(u, u, 0.5, (0.1, 0.2))
    p = TraceProbe(u, u, 0.5)
    assert p.rank == 2 and p.trace(np.ones(4)) == pytest.approx(8.0)


def test_random_probe_deterministic(torus_parts):
    g = torus_parts.grid
    a, b = random_probe(g, 2, 0.25, 3), random_probe(g, 2, 0.25, 3)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)
    assert not np.array_equal(a.u, random_probe(g, 2, 0.25, 4).u)


def test_group_needs_lorentzian(torus_parts):
    with pytest.raises(ContractViolation):
        SchrodingerGroup(operator_from_parts(torus_parts, 1.0))


@given(st.floats(0.0, 2.0), st.integers(0, 100))
def test_group_unitary_and_matches_expm(s, seed):
    adm = constant_adm(shift=0.2, gxx=1.1, V=0.3)
    op = operator_from_parts(assemble_parts(TorusGrid((6, 6), adm.periods), adm), LORENTZIAN)
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
    out = schrodinger_group(op, s, psi)
    assert op.norm(out) == pytest.approx(op.norm(psi), rel=1e-11)
    np.testing.assert_allclose(out, sla.expm(-1j * s * op.dense) @ psi, atol=1e-10)


def test_group_curved_unitary(torus_parts):
    op = operator_from_parts(torus_parts, LORENTZIAN)
    grp = SchrodingerGroup(op)
    psi = np.cos(np.arange(op.size) / 3.0) + 0j
    back = grp.apply(0.7, grp.apply(0.7, psi), sign=+1)
    np.testing.assert_allclose(back, psi, atol=1e-11)


def test_semigroup_images(torus_parts):
    op = operator_from_parts(torus_parts, 0.7)
    u = np.stack([np.ones(op.size), np.sin(np.arange(op.size))])
    img = semigroup_images(op, 0.3, u)
    np.testing.assert_allclose(img[1], sla.expm(0.3 * op.dense) @ u[1], atol=1e-10)
    assert np.array_equal(semigroup_images(op, 0, u), u)


@pytest.mark.parametrize("theta", [0.4, 0.1])
@pytest.mark.parametrize("adm", [constant_adm(), constant_adm(shift=0.3, gxx=1.2, V=0.2)])
def test_flat_closed_form(adm, theta):
    g = TorusGrid((12, 12), adm.periods)
    parts = assemble_parts(g, adm)
    probe = random_probe(g, 2, 0.5, 1)
    grp = SchrodingerGroup(operator_from_parts(parts, LORENTZIAN))
    gap, _ = trace_gap(operator_from_parts(parts, theta), grp, probe)
    assert gap == pytest.approx(flat_gap_closed_form(g, adm, theta, probe), abs=1e-10)
    _, gr = trace_gap(operator_from_parts(parts, theta), grp, probe,
                      operator_from_parts(parts, math.pi - theta))
    a, b = flat_trace_closed_form(g, adm, math.pi - theta, probe, reflected=True)
    assert gr == pytest.approx(abs(a - b), abs=1e-10)


@pytest.mark.parametrize("seed", [0, 1])
@pytest.mark.parametrize("s", [0.25, 0.5])
def test_gaps_shrink(torus_parts, seed, s):
    probe = random_probe(torus_parts.grid, 2, s, seed)
    scan = gap_scan(torus_parts, probe)
    for refl in (False, True):
        assert scan.strictly_decreasing(refl)
        assert scan.contraction_ratio(refl) < 1 / 3
    assert scan.gap_right_angle > 1e-8


def test_zero_time_gap_vanishes(torus_parts):
    probe = random_probe(torus_parts.grid, 2, 0.0, 0)
    scan = gap_scan(torus_parts, probe, include_right_angle=False)
    assert np.all(scan.gaps() < 1e-12)
