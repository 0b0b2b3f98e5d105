import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lapsewick.errors import ContractViolation, SizeLimitError
from lapsewick.lattice import TorusGrid, assemble_parts, operator_from_parts
from lapsewick.semigroup import (SectorSpec, auto_quad_points, dense_propagator, evolve_contour,
                                 evolve_contour_window, evolve_dense, hyperbolic_contour,
                                 resolvent_norm, resolvent_norm_scan, sample_sector,
                                 semigroup_contract_suite, spectral_radius_bound,
                                 weighted_adjoint, weighted_op_norm)

from conftest import random_adm


@pytest.fixture(scope="module")
def parts(curved_torus):
    return assemble_parts(TorusGrid((12, 12), curved_torus.periods), curved_torus)


def _zeta(theta, r, frac):
    tt = min(theta, math.pi - theta)
    return r * cmath.exp(1j * frac * tt)


def test_sector_spec():
    s = SectorSpec(0.5)
    assert s.contains(1 + 0.1j) and not s.contains(1j) and not s.contains(0)
    assert SectorSpec.theta_tilde(2.5) == pytest.approx(math.pi - 2.5)
    with pytest.raises(ContractViolation):
        SectorSpec(0.0)


def test_dense_basics(parts):
    op = operator_from_parts(parts, 1.0)
    assert np.array_equal(dense_propagator(op, 0), np.eye(op.size))
    with pytest.raises(SizeLimitError):
        dense_propagator(op, 0.1, threshold=10)
    psi = np.ones(op.size)
    assert evolve_dense(op, 0.2, psi).method == "dense-exponential"


@given(st.floats(0.2, math.pi - 0.2), st.floats(0.01, 0.5), st.floats(-0.9, 0.9),
       st.integers(0, 3), st.integers(0, 1000))
def test_contractivity_property(theta, r, frac, seed, vseed):
    adm = random_adm(seed)
    op = operator_from_parts(assemble_parts(TorusGrid((6, 6), adm.periods), adm), theta)
    T = dense_propagator(op, _zeta(theta, r, frac))
    rng = np.random.default_rng(vseed)
    psi = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
    assert op.norm(T @ psi) <= op.norm(psi) * (1 + 1e-12)
    assert weighted_op_norm(op, T) <= 1 + 1e-12


@given(st.floats(0.2, math.pi - 0.2), st.floats(0.01, 0.3), st.floats(0.01, 0.3),
       st.floats(-0.9, 0.9), st.integers(0, 3))
def test_semigroup_law_property(theta, r1, r2, frac, seed):
    adm = random_adm(seed)
    op = operator_from_parts(assemble_parts(TorusGrid((6, 6), adm.periods), adm), theta)
    z1, z2 = _zeta(theta, r1, frac), _zeta(theta, r2, -frac / 2)
    prod = dense_propagator(op, z1) @ dense_propagator(op, z2)
    assert weighted_op_norm(op, prod - dense_propagator(op, z1 + z2)) < 1e-10


@given(st.floats(0.2, math.pi - 0.2), st.integers(0, 3), st.integers(0, 100))
def test_weighted_adjoint_pairing(theta, seed, vseed):
    adm = random_adm(seed)
    parts = assemble_parts(TorusGrid((6, 6), adm.periods), adm)
    op = operator_from_parts(parts, theta)
    opr = operator_from_parts(parts, math.pi - theta)
    z = _zeta(theta, 0.1, 0.4)
    T = dense_propagator(op, z)
    rng = np.random.default_rng(vseed)
    u, v = (rng.standard_normal((2, op.size)) + 1j * rng.standard_normal((2, op.size)))
    Tadj = weighted_adjoint(op, T)
    assert op.inner(u, T @ v) == pytest.approx(op.inner(Tadj @ u, v), abs=1e-11)
    assert weighted_op_norm(op, Tadj - dense_propagator(opr, np.conj(z))) < 1e-10


@pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 4, math.pi / 2, 2.3])
@pytest.mark.parametrize("zeta", [0.05, 0.1, 0.05 + 0.02j])
def test_contour_matches_dense(parts, theta, zeta):
    op = operator_from_parts(parts, theta)
    if abs(cmath.phase(zeta)) >= op.theta_tilde:
        pytest.skip("zeta outside the sector")
    rng = np.random.default_rng(1)
    psi = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
    q = auto_quad_points(op, zeta, 1e-8)
    res = evolve_contour(op, zeta, psi, q)
    ref = dense_propagator(op, zeta) @ psi
    err = np.max(np.abs(res.state - ref)) / np.max(np.abs(ref))
    assert err < 1e-8
    assert err <= max(res.diagnostics["error_estimate"], 1e-14)


def test_contour_window_matches_single(parts):
    op = operator_from_parts(parts, 1.0)
    psi = np.cos(np.arange(op.size))
    zs = [0.02, 0.05, 0.1]
    win = evolve_contour_window(op, zs, psi, 96)
    for z, r in zip(zs, win):
        ref = dense_propagator(op, z) @ psi
        assert np.max(np.abs(r.state - ref)) / np.max(np.abs(ref)) < 1e-9


def test_contour_zero_and_rejections(parts):
    op = operator_from_parts(parts, 0.5)
    psi = np.ones(op.size)
    assert np.array_equal(evolve_contour(op, 0, psi).state, psi)
    with pytest.raises(ContractViolation):
        evolve_contour(op, 1j, psi)
    with pytest.raises(ContractViolation):
        hyperbolic_contour(0.5, 0.1, 8, spectral_radius_bound(op))


def test_spectral_radius_bound(parts):
    op = operator_from_parts(parts, 0.8)
    assert spectral_radius_bound(op) >= np.max(np.abs(np.linalg.eigvals(op.dense))) * (1 - 1e-12)


@pytest.mark.parametrize("lam", [0.3, 2 + 1j, -5 + 40j])
def test_resolvent_power_matches_svd(parts, lam):
    op = operator_from_parts(parts, 1.0)
    exact, _ = resolvent_norm(op, lam, "svd")
    approx, conv = resolvent_norm(op, lam, "power", iters=2000, tol=1e-12)
    assert conv
    assert approx == pytest.approx(exact, rel=1e-6)


@given(st.floats(0.05, 3.0), st.integers(1, 50), st.integers(0, 100))
def test_sample_sector_inside(alpha, n, seed):
    z = sample_sector(alpha, n, 1e-2, 1e3, seed)
    assert np.all(np.abs(np.angle(z)) < alpha)
    assert np.all((np.abs(z) >= 1e-2) & (np.abs(z) <= 1e3))


@pytest.mark.parametrize("theta", [math.pi / 4, math.pi / 2, 2.0])
def test_resolvent_bounds(parts, theta):
    op = operator_from_parts(parts, theta)
    tt = op.theta_tilde
    sharp = resolvent_norm_scan(op, sample_sector(tt, 10, 1e-2, 1e3, 0))
    assert all(r.kind == "sharp" and r.ratio <= 1 for r in sharp)
    sector = resolvent_norm_scan(op, sample_sector(math.pi / 2 + tt / 2, 10, 1e-2, 1e3, 1),
                                 theta_prime=tt / 2)
    assert all(r.ratio <= 1 for r in sector)
    with pytest.raises(ContractViolation):
        resolvent_norm_scan(op, [-1.0 + 0j])


def test_contract_suite(parts):
    op = operator_from_parts(parts, math.pi / 4)
    opr = operator_from_parts(parts, 3 * math.pi / 4)
    psi = np.stack([np.ones(op.size), np.cos(np.arange(op.size) / 5)])
    rep = semigroup_contract_suite(op, opr, [0.05, 0.1, 0.05 + 0.02j], psi)
    e = rep.entries
    assert e["semigroup_law"] < 1e-10
    assert e["contractivity_excess"] < 1e-10
    assert e["adjoint_law"] < 1e-10
    assert e["generator_order"] == pytest.approx(1.0, abs=0.1)
    assert e["derivative_finite"]
