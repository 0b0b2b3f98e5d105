"""Acceptance criteria 1-9 with pinned tolerances and wall-clock budgets.

Each test records one ``PASS``/``FAIL`` line (printed immediately and again
in the terminal summary) and then asserts the criterion and its runtime.
"""

import math
import time

import numpy as np
import pytest

from lapsewick.config import TOLERANCES, preset
from lapsewick.eikonal import residual_slope, solve_eikonal_jets
from lapsewick.geometry import adm_jets
from lapsewick.kernel_lab import (build_kernel, chapman_kolmogorov, default_window,
                                  difference_to_parametrix, fit_diagonal_asymptotics,
                                  heat_equation_residual, hermiticity_pairing,
                                  smoothing_rate_probe, white_noise)
from lapsewick.lattice import (LORENTZIAN, TorusGrid, assemble_parts, dense_spectrum,
                               flat_fourier_eigenvalues, operator_from_parts, spectrum_match,
                               wedge_check)
from lapsewick.lorentz_limit import (SchrodingerGroup, flat_gap_closed_form, gap_scan,
                                     random_probe, trace_gap)
from lapsewick.oracles import a1_oracle, closed_form_coefficients, flat_potential_coefficients
from lapsewick.semigroup import (auto_quad_points, dense_propagator, evolve_contour,
                                 resolvent_norm_scan, sample_sector, semigroup_contract_suite)
from lapsewick.transport import diagonal_coefficients

pytestmark = pytest.mark.slow

TOL = TOLERANCES["default"]
THETAS = (math.pi / 6, math.pi / 4, math.pi / 2)
ZETAS = (0.05, 0.1, 0.05 + 0.02j)
SMALL_ANGLES = (0.4, 0.2, 0.1, 0.05)


def _record(log, k, ok, elapsed, budget, detail):
    passed = bool(ok) and elapsed < budget
    line = (f"{'PASS' if passed else 'FAIL'} criterion {k}: {detail} "
            f"[{elapsed:.1f}s / {budget:.0f}s]")
    print(line)
    log.append(line)
    return passed


def _smooth_batch(grid):
    ph = 2 * np.pi * grid.nodes() / np.asarray(grid.periods)
    return np.stack([np.exp(1j * ph.sum(axis=1)), np.cos(ph[:, -1]) + 0.5 * np.sin(ph[:, 0])])


def test_criterion_1_wedge_and_fourier(acceptance_log):
    t0 = time.perf_counter()
    wedge, fourier = 0.0, 0.0
    for name, n in (("flat", 32), ("curved_torus", 24)):
        adm = preset(name)
        grid = TorusGrid((n, n), adm.periods)
        parts = assemble_parts(grid, adm)
        for theta in THETAS:
            eigs = dense_spectrum(operator_from_parts(parts, theta), n * n)
            wedge = max(wedge, wedge_check(eigs, theta).max_angle_violation)
            if adm.is_flat:
                ref = flat_fourier_eigenvalues(grid, adm, theta)
                fourier = max(fourier, spectrum_match(eigs, ref))
    ok = wedge <= TOL["wedge_angle"] and fourier <= TOL["fourier_match"]
    el = time.perf_counter() - t0
    assert _record(acceptance_log, 1, ok, el, 60,
                   f"angle violation {wedge:.2e} <= 1e-9, Fourier multiset {fourier:.2e} <= 1e-10")


def test_criterion_2_resolvent_bounds(acceptance_log):
    t0 = time.perf_counter()
    adm = preset("curved_torus")
    grid = TorusGrid((24, 24), adm.periods)
    parts = assemble_parts(grid, adm)
    sharp, sector = 0.0, 0.0
    for k, theta in enumerate(THETAS):
        op = operator_from_parts(parts, theta)
        tt = op.theta_tilde
        rows = resolvent_norm_scan(op, sample_sector(tt, 50, 1e-2, 1e4, k),
                                   sharp_slack=TOL["resolvent_sharp_slack"])
        sharp = max(sharp, max(r.ratio for r in rows))
        rows = resolvent_norm_scan(op, sample_sector(math.pi / 2 + tt / 2, 50, 1e-2, 1e4, 100 + k),
                                   theta_prime=tt / 2, sharp_slack=TOL["resolvent_sharp_slack"],
                                   sector_slack=TOL["resolvent_sector_slack"])
        sector = max(sector, max(r.ratio for r in rows))
    el = time.perf_counter() - t0
    ok = sharp <= 1 and sector <= 1
    assert _record(acceptance_log, 2, ok, el, 120,
                   f"max norm/bound sharp {sharp:.4f}, sector {sector:.4f} (both <= 1)")


def test_criterion_3_semigroup_contracts(acceptance_log):
    t0 = time.perf_counter()
    adm = preset("curved_torus")
    grid = TorusGrid((24, 24), adm.periods)
    parts = assemble_parts(grid, adm)
    theta = math.pi / 4
    op = operator_from_parts(parts, theta)
    opr = operator_from_parts(parts, math.pi - theta)
    e = semigroup_contract_suite(op, opr, list(ZETAS), _smooth_batch(grid)).entries
    contract = max(e["semigroup_law"], e["contractivity_excess"], e["adjoint_law"])
    rng = np.random.default_rng(0)
    x = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
    contour = 0.0
    for z in ZETAS:
        c = evolve_contour(op, z, x, auto_quad_points(op, z, TOL["contour"]))
        d = dense_propagator(op, z) @ x
        contour = max(contour, float(np.max(np.abs(c.state - d)) / np.max(np.abs(d))))
    el = time.perf_counter() - t0
    ok = contract <= TOL["contract"] and contour <= TOL["contour"]
    assert _record(acceptance_log, 3, ok, el, 120,
                   f"contract deviation {contract:.2e} <= 1e-10, contour vs dense {contour:.2e} <= 1e-8")


def test_criterion_4_eikonal(acceptance_log):
    t0 = time.perf_counter()
    adm = preset("curved_torus")
    rng = np.random.default_rng(0)
    worst = 0.0
    for i in range(20):
        y = tuple(rng.uniform(0, 1, 2) * np.asarray(adm.periods))
        theta = THETAS[i % 3]
        sj = solve_eikonal_jets(adm_jets(adm, y, 5), theta, 5, anchor="first")
        cf = closed_form_coefficients(adm, theta, y)
        for n in (2, 3, 4):
            for idx in np.ndindex(*(2,) * n):
                if list(idx) == sorted(idx):
                    worst = max(worst, abs(sj.coefficient(*idx) - cf[n][idx]))
    slope = residual_slope(adm, math.pi / 4, (0.137 * adm.periods[0],) * 2, 10).slope
    el = time.perf_counter() - t0
    ok = worst <= TOL["eikonal_closed_form"] and slope >= 10 - TOL["slope_margin"]
    assert _record(acceptance_log, 4, ok, el, 30,
                   f"closed forms {worst:.2e} <= 1e-10, residual slope {slope:.3f} >= 9.5")


def test_criterion_5_transport(acceptance_log):
    t0 = time.perf_counter()
    fp = preset("flat_potential")
    ref = flat_potential_coefficients(fp.potential.constant, 4)
    flat = max(abs(a - r) for theta in THETAS
               for a, r in zip(diagonal_coefficients(fp, theta, (0.3, 1.1), 4), ref))
    adm = preset("curved")
    y = (0.0, 0.0)
    A = diagonal_coefficients(adm, math.pi / 2, y, 1)
    a1 = abs(A[1] - a1_oracle(adm, math.pi / 2, y))
    el = time.perf_counter() - t0
    ok = flat <= TOL["transport_flat"] and a1 <= TOL["a1_oracle"]
    assert _record(acceptance_log, 5, ok, el, 60,
                   f"flat (-V)^n/n! {flat:.2e} <= 1e-10, curved A1 vs a1 {a1:.2e} <= 1e-8")


def test_criterion_6_diagonal_fit(acceptance_log):
    t0 = time.perf_counter()
    adm = preset("curved")
    y = (0.0, 0.0)
    zw = default_window(TorusGrid((64, 64), adm.periods), 8)
    d0, d1, rem = 0.0, 0.0, math.inf
    for theta in (math.pi / 2, math.pi / 3):
        df = fit_diagonal_asymptotics(adm, theta, y, zw, 1, sizes=(64, 128))
        d0 = max(d0, df.relative_deviation[0])
        d1 = max(d1, df.relative_deviation[1])
        r = difference_to_parametrix(adm, theta, 1, zw, df.extrapolated, y)
        rem = min(rem, r.normalized_exponent)
    el = time.perf_counter() - t0
    ok = d0 <= TOL["fit_A0"] and d1 <= TOL["fit_A1"] and rem >= 1 + TOL["remainder_margin"]
    assert _record(acceptance_log, 6, ok, el, 900,
                   f"A0 dev {d0:.2%} <= 2%, A1 dev {d1:.2%} <= 5%, remainder exponent {rem:.3f} >= 1.5")


def test_criterion_7_kernel_laws(acceptance_log):
    t0 = time.perf_counter()
    adm = preset("curved_torus")
    grid = TorusGrid((24, 24), adm.periods)
    parts = assemble_parts(grid, adm)
    herm, ck, order = 0.0, 0.0, math.inf
    for theta in (math.pi / 4, math.pi / 2):
        op = operator_from_parts(parts, theta)
        opr = operator_from_parts(parts, math.pi - theta)
        for z in ZETAS:
            k = build_kernel(op, z)
            herm = max(herm, hermiticity_pairing(k, build_kernel(opr, np.conj(z))))
            ck = max(ck, chapman_kolmogorov(k, k, build_kernel(op, 2 * z)))
        res = [heat_equation_residual(op, [build_kernel(op, 0.05 + s * dz) for s in (-1, 0, 1)])
               for dz in (0.002, 0.001)]
        o = math.log2(res[0].residual / res[1].residual)
        order = o if abs(o - 2) > abs(order - 2) or math.isinf(order) else order
    el = time.perf_counter() - t0
    ok = (herm <= TOL["hermiticity"] and ck <= TOL["chapman_kolmogorov"]
          and abs(order - 2) <= TOL["heat_order_margin"])
    assert _record(acceptance_log, 7, ok, el, 300,
                   f"hermiticity {herm:.2e} <= 1e-10, Chapman-Kolmogorov {ck:.2e} <= 1e-9, "
                   f"heat residual order {order:.3f} (2 +- 0.5)")


def test_criterion_8_lorentz_limit(acceptance_log):
    t0 = time.perf_counter()
    adm = preset("curved_torus")
    grid = TorusGrid((24, 24), adm.periods)
    parts = assemble_parts(grid, adm)
    decreasing, ratio = True, 0.0
    for p in range(3):
        for s in (0.25, 0.5):
            scan = gap_scan(parts, random_probe(grid, 2, s, p, theta_list=SMALL_ANGLES))
            for refl in (False, True):
                decreasing &= scan.strictly_decreasing(refl)
                ratio = max(ratio, scan.contraction_ratio(refl))
    fadm = preset("flat_shift")
    fgrid = TorusGrid((24, 24), fadm.periods)
    fparts = assemble_parts(fgrid, fadm)
    group = SchrodingerGroup(operator_from_parts(fparts, LORENTZIAN))
    flat = 0.0
    for s in (0.25, 0.5):
        probe = random_probe(fgrid, 2, s, 0, theta_list=SMALL_ANGLES)
        for th in SMALL_ANGLES:
            g, _ = trace_gap(operator_from_parts(fparts, th), group, probe)
            flat = max(flat, abs(g - flat_gap_closed_form(fgrid, fadm, th, probe)))
    el = time.perf_counter() - t0
    ok = decreasing and ratio < TOL["gap_ratio"] and flat <= TOL["flat_gap"]
    assert _record(acceptance_log, 8, ok, el, 300,
                   f"gaps strictly decreasing {decreasing}, max gap(0.05)/gap(0.4) {ratio:.3f} < 1/3, "
                   f"flat closed form {flat:.2e} <= 1e-10")


def test_criterion_9_smoothing(acceptance_log):
    t0 = time.perf_counter()
    adm = preset("curved_torus")
    grid = TorusGrid((64, 64), adm.periods)
    op = operator_from_parts(assemble_parts(grid, adm), math.pi / 3)
    h = float(np.max(grid.spacings))
    zs = np.geomspace(4 * h * h, (min(adm.periods) / 8) ** 2, 10)
    fit = smoothing_rate_probe(op, white_noise(grid, 0), zs, m_list=(0,))[0]
    el = time.perf_counter() - t0
    ok = fit.exponent <= fit.sigma + TOL["smoothing_margin"]
    assert _record(acceptance_log, 9, ok, el, 120,
                   f"smoothing exponent {fit.exponent:.3f} <= {fit.sigma + TOL['smoothing_margin']:.1f}")
