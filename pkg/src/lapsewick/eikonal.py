"""Order-by-order solution of the rotated eikonal equation.

The truncated world function is written ``sigma = -i e^{i theta} S`` with
``S = sum_n (1/n!) s_{mu_1..mu_n} dy^{mu_1}...dy^{mu_n}``, ``dy = y - y'``.
With coefficients anchored at ``y'`` the defect

    E[sigma] = sigma - (kappa/2) g_theta^{mu nu}(y) d_mu sigma d_nu sigma
             = -i e^{i theta} (S - 1/2 G^{mu nu}(y' + dy) d_mu S d_nu S)

is a polynomial identity in ``dy`` whose degree-``n`` part is linear in
``S_n`` with multiplier ``n - 1`` (Euler's identity against ``S_2``), so
the recursion is purely algebraic.  Coefficients anchored at ``y`` are
obtained by carrying the base point as extra variables ``eta`` and shifting
``eta' = eta - dy`` exactly.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import ConeViolationError, ContractViolation
from .geometry import AdmField, JetPoint, adm_jets, metric_jets
from .numeric import FLOAT, backend_for
from .taylor import (Ring, alpha_factorial, alpha_to_multi_index, multi_index_to_alpha,
                     substitute_difference)


@dataclass
class SymJet:
    """Graded table of totally symmetric coefficients.

    ``poly`` holds Taylor coefficients of ``S`` in ``ring`` (variables
    ``dy``); ``coeffs`` maps sorted multi-indices to tensor components.
    ``base_gradient`` (anchor ``'first'`` only) holds the polynomials
    ``d S / d(base)^mu`` needed to differentiate in the first argument.
    """

    base: tuple
    theta: float
    min_order: int
    max_order: int
    coeffs: dict
    ring: Ring
    poly: np.ndarray
    anchor: str = "first"
    base_gradient: list | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def prefactor(self) -> complex:
        """``-i e^{i theta}``."""
        return -1j * cmath.exp(1j * self.theta)

    def coefficient(self, *indices) -> complex:
        key = tuple(sorted(indices))
        if not (self.min_order <= len(key) <= self.max_order):
            raise KeyError(f"order {len(key)} outside [{self.min_order}, {self.max_order}]")
        return self.coeffs.get(key, 0j)

    def evaluate(self, dy) -> complex:
        """``sigma(dy)``."""
        return self._pref() * self.ring.evaluate(self.poly, dy)

    def _pref(self):
        be = self.ring.backend
        return -1j * be.exp(1j * be.real(self.theta))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["order", "multi_index", "re", "im"])
            for key in sorted(self.coeffs, key=lambda k: (len(k), k)):
                v = complex(self.coeffs[key])
                w.writerow([len(key), " ".join(map(str, key)), repr(v.real), repr(v.imag)])


def _coeff_table(poly, ring: Ring, lo: int, hi: int) -> dict:
    out = {}
    for alpha in ring.monomials:
        n = sum(alpha)
        if lo <= n <= hi:
            out[alpha_to_multi_index(alpha)] = complex(poly[alpha]) * alpha_factorial(alpha)
    return out


def lift_to_pair_ring(poly, small: Ring, big: Ring):
    """``P(w) -> Q(eta, dy) = P(eta + dy)`` with ``eta`` on the first axes."""
    D = small.nvars
    out = big.zeros()
    K = min(small.degree, big.degree)
    sl = (slice(0, K + 1),) * D + (0,) * D
    out[sl] = poly[(slice(0, K + 1),) * D]
    out[~big.mask] = 0
    return substitute_difference(out, big, [(mu, D + mu) for mu in range(D)], sign=+1)


def _eikonal_recursion(ring: Ring, G, g_low, dy_axes, top: int):
    """Solve ``S = 1/2 G dS dS`` for Delta-y degrees 2..top; returns ``(S, F)``."""
    D = len(dy_axes)
    mul = ring.mul
    dyvars = [ring.variable(ax) for ax in dy_axes]
    S = ring.zeros()
    for mu in range(D):
        for nu in range(D):
            S = S + 0.5 * mul(g_low[mu][nu], mul(dyvars[mu], dyvars[nu]))

    def defect(S):
        dS = [ring.deriv(S, ax) for ax in dy_axes]
        total = ring.zeros()
        for mu in range(D):
            acc = ring.zeros()
            for nu in range(D):
                acc = acc + mul(G[mu][nu], dS[nu])
            total = total + mul(dS[mu], acc)
        return 0.5 * total - S

    for n in range(3, top + 1):
        F = defect(S)
        S = S - ring.homogeneous(F, n, dy_axes) / (n - 1)
    return S, defect(S)


def solve_eikonal_jets(jet: JetPoint, theta: float, L: int, anchor: str = "first") -> SymJet:
    """Eikonal coefficients of orders ``2..L-1`` at the jet base.

    Parameters
    ----------
    jet : JetPoint
        ADM jets at the base point, of order at least ``L - 1`` (``L`` for
        ``anchor='first'``, which also carries the first base derivative).
    theta : float
    L : int
        Truncation order; the defect vanishes through order ``L - 1``.
    anchor : {'first', 'second'}
        Whether the coefficients are evaluated at ``y`` (the displayed
        series) or at ``y'`` (the algebraic recursion).
    """
    if L < 3:
        raise ContractViolation("L must be >= 3")
    need = L if anchor == "first" else L - 1
    if jet.order < need:
        raise ContractViolation(f"jet order {jet.order} < required {need}")
    top = L - 1
    be = jet.ring.backend
    D = jet.ring.nvars
    if anchor == "second":
        ring = Ring(D, top, be)
        mj = metric_jets(_restrict(jet, top), theta)
        S, F = _eikonal_recursion(ring, mj.upper, _const_lower(mj, ring), list(range(D)), top)
        residual = ring.max_abs(F, top)
        return SymJet(jet.base, float(theta), 2, top, _coeff_table(S, ring, 2, top), ring, S,
                      "second", None, {"defect_max": residual})
    if anchor != "first":
        raise ValueError(f"unknown anchor {anchor!r}")
    T = L
    small = Ring(D, T, be)
    mj = metric_jets(_restrict(jet, T), theta)
    big = Ring(2 * D, T, be)
    upper = [[lift_to_pair_ring(mj.upper[m][n], small, big) for n in range(D)] for m in range(D)]
    lower_eta = [[_embed_eta(mj.lower[m][n], small, big) for n in range(D)] for m in range(D)]
    dy_axes = list(range(D, 2 * D))
    S_pair, F_pair = _eikonal_recursion(big, upper, lower_eta, dy_axes, top)
    defect_second = big.max_abs(big.truncate(F_pair, top, dy_axes), None)
    # eta' = eta - dy: coefficients at y' -> coefficients at y
    S_y = substitute_difference(S_pair, big, [(mu, D + mu) for mu in range(D)], sign=-1)
    S_y = big.truncate(S_y, top, dy_axes)
    ring = Ring(D, top, be)
    S0 = _slice_eta(S_y, big, ring, None)
    grad = [_slice_eta(S_y, big, ring, mu) for mu in range(D)]
    sj = SymJet(jet.base, float(theta), 2, top, _coeff_table(S0, ring, 2, top), ring, S0,
                "first", grad, {"defect_max_second": defect_second})
    sj.diagnostics["defect_max"] = defect_taylor_max(sj, _upper_at_base(mj))
    return sj


def _restrict(jet: JetPoint, order: int) -> JetPoint:
    if jet.order == order:
        return jet
    ring = Ring(jet.ring.nvars, order, jet.ring.backend)
    emb = ring.embed
    return JetPoint(jet.base, order, ring, emb(jet.lapse), [emb(s) for s in jet.shift],
                    [[emb(g) for g in row] for row in jet.spatial_metric], emb(jet.potential),
                    jet.periods)


def _const_lower(mj, ring):
    zero = (0,) * ring.nvars
    return [[ring.constant(g[zero]) for g in row] for row in mj.lower]


def _upper_at_base(mj):
    zero = (0,) * mj.ring.nvars
    return [[g[zero] for g in row] for row in mj.upper]


def _embed_eta(poly, small: Ring, big: Ring):
    D = small.nvars
    out = big.zeros()
    K = min(small.degree, big.degree)
    out[(slice(0, K + 1),) * D + (0,) * D] = poly[(slice(0, K + 1),) * D]
    out[~big.mask] = 0
    return out


def _slice_eta(arr, big: Ring, ring: Ring, mu):
    D = ring.nvars
    idx = [0] * D
    if mu is not None:
        idx[mu] = 1
    sub = arr[tuple(idx) + (slice(None),) * D]
    out = ring.zeros()
    K = ring.degree
    out[...] = sub[(slice(0, K + 1),) * D]
    out[~ring.mask] = 0
    return out


def _gradient_polys(sj: SymJet):
    ring = sj.ring
    D = ring.nvars
    dS = [ring.deriv(sj.poly, mu) for mu in range(D)]
    if sj.anchor == "first":
        dS = [dS[mu] + sj.base_gradient[mu] for mu in range(D)]
    return dS


def defect_taylor_max(sj: SymJet, upper_at_base) -> float:
    """Largest defect Taylor coefficient through order ``max_order``.

    Only meaningful for ``anchor='first'``, where the metric in the defect is
    evaluated at the fixed base point so the defect is a polynomial.
    """
    ring = Ring(sj.ring.nvars, 2 * sj.max_order, sj.ring.backend)
    D = ring.nvars
    S = ring.embed(sj.poly)
    dS = [ring.embed(p) for p in _gradient_polys(sj)]
    acc = ring.zeros()
    for mu in range(D):
        for nu in range(D):
            acc = acc + upper_at_base[mu][nu] * ring.mul(dS[mu], dS[nu])
    F = S - 0.5 * acc
    return ring.max_abs(F, sj.max_order)


def eikonal_residual(sj: SymJet, adm: AdmField, dy) -> complex:
    """``E_theta[sigma^L](y, y - dy)`` with the analytic metric.

    For ``anchor='first'`` the base is ``y``; for ``anchor='second'`` the
    base is ``y'`` and the metric is evaluated at ``y = y' + dy``.
    """
    ring = sj.ring
    be = ring.backend
    D = ring.nvars
    dy = [be.real(v) for v in dy]
    if sj.anchor == "first":
        point = sj.base
    else:
        point = tuple(b + v for b, v in zip(sj.base, dy))
    jet0 = adm_jets(adm, point, 0, be) if be.dtype is object else adm_jets(adm, point, 0)
    mj = metric_jets(jet0, sj.theta)
    G = _upper_at_base(mj)
    S = ring.evaluate(sj.poly, dy)
    dS = [ring.evaluate(p, dy) for p in _gradient_polys(sj)]
    quad = sum(G[m][n] * dS[m] * dS[n] for m in range(D) for n in range(D))
    return sj._pref() * (S - 0.5 * quad)


@dataclass(frozen=True)
class ConeEstimate:
    c_minus: float
    c_plus: float
    radius: float
    samples: int


def real_part_cone(sj: SymJet, adm: AdmField, r: float, directions: int = 64,
                   radii: int = 8, seed: int = 0) -> ConeEstimate:
    """Range of ``Re sigma(y, y - dy) / |dy|^2`` over ``0 < |dy| <= r``."""
    D = sj.ring.nvars
    if D == 2:
        ang = 2 * np.pi * np.arange(directions) / directions
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((directions, D))
        dirs = np.vstack([np.eye(D), -np.eye(D), dirs])
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rad = r * np.arange(1, radii + 1) / radii
    pts = (rad[:, None, None] * dirs[None, :, :]).reshape(-1, D)
    vals = sj.prefactor * Ring(D, sj.max_order).evaluate_many(
        np.asarray(sj.ring.backend.to_complex(sj.poly)), pts)
    ratio = vals.real / np.sum(pts**2, axis=1)
    est = ConeEstimate(float(ratio.min()), float(ratio.max()), float(r), len(pts))
    if est.c_minus <= 0:
        raise ConeViolationError(
            f"Re sigma / |dy|^2 reaches {est.c_minus:.3g} within radius {r}: shrink r or move theta away from 0, pi")
    return est


def quadratic_form_range(adm: AdmField, theta: float, y) -> tuple[float, float]:
    """Eigenvalue range of ``1/2 Re(-i e^{i theta} g^theta_{mu nu}(y))``."""
    from .geometry import build_theta_metric

    g = build_theta_metric(adm, theta, y).components
    form = 0.5 * np.real(-1j * cmath.exp(1j * theta) * g)
    ev = np.linalg.eigvalsh(0.5 * (form + form.T))
    return float(ev.min()), float(ev.max())


@dataclass
class ResidualSlope:
    L: int
    radii: np.ndarray
    residuals: np.ndarray
    slope: float


def residual_slope(adm: AdmField, theta: float, y, L: int, direction=None,
                   radii=None, dps: int | None = 50) -> ResidualSlope:
    """Log-log slope of ``|E[sigma_L](dy)|`` along a ray.

    Uses the ``y'``-anchored solution in mpmath precision (``dps``) since
    the residual falls below the double-precision floor at small ``|dy|``.
    """
    D = adm.dim
    direction = np.ones(D) / math.sqrt(D) if direction is None else np.asarray(direction, float)
    direction = direction / np.linalg.norm(direction)
    radii = np.geomspace(1e-3, 1e-1, 9) if radii is None else np.asarray(radii, float)
    be = backend_for(dps)
    with mpmath.workdps(dps or 15):
        sj = solve_eikonal_jets(adm_jets(adm, y, L, be), theta, L, anchor="second")
        res = np.array([float(abs(eikonal_residual(sj, adm, r * direction))) for r in radii])
    keep = res > 0
    slope = float(np.polyfit(np.log(radii[keep]), np.log(res[keep]), 1)[0])
    return ResidualSlope(L, radii, res, slope)
