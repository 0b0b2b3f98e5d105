"""Local parametrix, its heat residual and the predicted diagonal series.

    F_zeta(y, y') = c(zeta) exp(-s(y, y') / (2 zeta)) sum_n A_n(y, y') (kappa zeta)^n
    c(zeta)       = (-i e^{i theta})^{(d-1)/2} / (4 pi zeta)^{(d+1)/2}

with ``s`` and ``A_n`` from the ``y'``-anchored eikonal and transport
polynomials.  Powers use the principal branch.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractViolation, OutsideConeError
from .geometry import AdmField
from .taylor import Ring
from .transport import LocalExpansion, local_expansion, point_geometry


def rotation_factor(theta: float, d: int) -> complex:
    """``(-i e^{i theta})^{(d-1)/2} = e^{i (theta - pi/2)(d-1)/2}``."""
    return cmath.exp(1j * (theta - math.pi / 2) * (d - 1) / 2)


def parametrix_prefactor(theta: float, d: int, zeta: complex) -> complex:
    zeta = complex(zeta)
    if zeta == 0:
        raise ContractViolation("zeta must be nonzero")
    return rotation_factor(theta, d) / (4 * math.pi * zeta) ** ((d + 1) / 2)


def theta_tilde(theta: float) -> float:
    return min(theta, math.pi - theta)


def _check_zeta(theta: float, zeta: complex) -> complex:
    zeta = complex(zeta)
    if zeta == 0 or abs(cmath.phase(zeta)) >= theta_tilde(theta):
        raise ContractViolation(f"zeta={zeta} outside the sector |arg| < {theta_tilde(theta):.4g}")
    return zeta


@dataclass
class ParametrixEval:
    theta: float
    order: int
    zeta: complex
    value: complex
    prefactor: complex


class LocalParametrix:
    """Parametrix with second argument fixed at ``base``; ``y = base + dy``."""

    def __init__(self, expansion: LocalExpansion):
        self.exp = expansion
        self.theta = expansion.theta
        self.N = expansion.N
        self.d = len(expansion.base) - 1
        self.D = self.d + 1
        self.kappa = 1j * cmath.exp(-1j * self.theta)
        self.sigma_pref = -1j * cmath.exp(1j * self.theta)
        sring = expansion.s_jet.ring
        aring = expansion.solution.ring
        self._S = self._derivs(sring, expansion.s_jet.poly)
        self._A = [self._derivs(aring, a) for a in expansion.solution.a_polys]
        self._sring, self._aring = sring, aring

    def _derivs(self, ring: Ring, poly):
        D = ring.nvars
        d1 = [ring.deriv(poly, mu) for mu in range(D)]
        d2 = [[ring.deriv(d1[mu], nu) for nu in range(D)] for mu in range(D)]
        return poly, d1, d2

    def _eval(self, ring, trio, pts):
        p, d1, d2 = trio
        v = ring.evaluate_many(p, pts)
        g = np.stack([ring.evaluate_many(q, pts) for q in d1], axis=-1)
        h = np.stack([np.stack([ring.evaluate_many(q, pts) for q in row], axis=-1) for row in d2],
                     axis=-2)
        return v, g, h

    def s_values(self, dy):
        pts = np.atleast_2d(np.asarray(dy, dtype=float))
        return self.sigma_pref * self._sring.evaluate_many(self._S[0], pts)

    def value(self, zeta, dy, check_cone: bool = True):
        zeta = _check_zeta(self.theta, zeta)
        pts = np.atleast_2d(np.asarray(dy, dtype=float))
        s = self.s_values(pts)
        if check_cone and np.any(s.real < 0):
            raise OutsideConeError("Re s < 0 at the requested separation")
        amp = sum(self._aring.evaluate_many(a[0], pts) * (self.kappa * zeta) ** n
                  for n, a in enumerate(self._A))
        return parametrix_prefactor(self.theta, self.d, zeta) * np.exp(-s / (2 * zeta)) * amp

    def zeta_derivative(self, zeta, dy):
        """Analytic ``d F / d zeta`` of the finite sum."""
        zeta = _check_zeta(self.theta, zeta)
        pts = np.atleast_2d(np.asarray(dy, dtype=float))
        s = self.s_values(pts)
        a_vals = [self._aring.evaluate_many(a[0], pts) for a in self._A]
        k = self.kappa
        phi = sum(a * (k * zeta) ** n for n, a in enumerate(a_vals))
        dphi = sum(n * a * k**n * zeta ** (n - 1) for n, a in enumerate(a_vals) if n > 0)
        base = parametrix_prefactor(self.theta, self.d, zeta) * np.exp(-s / (2 * zeta))
        return base * (phi * (-(self.d + 1) / (2 * zeta) + s / (2 * zeta**2)) + dphi)

    def heat_residual(self, zeta, dy):
        """``(d_zeta - Delta_{theta, y}) F`` with the analytic metric at ``y``."""
        zeta = _check_zeta(self.theta, zeta)
        pts = np.atleast_2d(np.asarray(dy, dtype=float))
        D = self.D
        Sv, Sg, Sh = self._eval(self._sring, self._S, pts)
        s, ds, dds = self.sigma_pref * Sv, self.sigma_pref * Sg, self.sigma_pref * Sh
        k = self.kappa
        phi = np.zeros(len(pts), complex)
        dphi = np.zeros((len(pts), D), complex)
        ddphi = np.zeros((len(pts), D, D), complex)
        for n, trio in enumerate(self._A):
            v, g, h = self._eval(self._aring, trio, pts)
            c = (k * zeta) ** n
            phi += c * v
            dphi += c * g
            ddphi += c * h
        out = np.empty(len(pts), complex)
        base = np.asarray(self.exp.base, dtype=float)
        pref = parametrix_prefactor(self.theta, self.d, zeta)
        dzeta = self.zeta_derivative(zeta, pts)
        for i, y in enumerate(base + pts):
            pg = point_geometry(self.exp.adm, self.theta, y)
            G = np.array(pg.upper, dtype=complex)
            gam = np.array(pg.gamma, dtype=complex)
            u = np.exp(-s[i] / (2 * zeta))
            du = -u * ds[i] / (2 * zeta)
            ddu = u * (np.outer(ds[i], ds[i]) / (4 * zeta**2) - dds[i] / (2 * zeta))
            lap = (phi[i] * (np.sum(G * ddu) + gam @ du) + 2 * du @ G @ dphi[i]
                   + u * (np.sum(G * ddphi[i]) + gam @ dphi[i]) - pg.potential * u * phi[i])
            out[i] = dzeta[i] - k * pref * lap
        return out


@lru_cache(maxsize=4096)
def _cached_local(adm: AdmField, theta: float, y: tuple, N: int) -> LocalParametrix:
    return LocalParametrix(local_expansion(adm, theta, y, N))


def local_parametrix(adm: AdmField, theta: float, y_prime, N: int) -> LocalParametrix:
    return _cached_local(adm, float(theta), tuple(float(v) for v in y_prime), int(N))


def eval_parametrix(adm: AdmField, theta: float, N: int, zeta, y, y_prime) -> ParametrixEval:
    """``F_zeta(y, y')``; raises ``OutsideConeError`` when ``Re s < 0``."""
    lp = local_parametrix(adm, theta, y_prime, N)
    dy = np.asarray(y, float) - np.asarray(y_prime, float)
    value = complex(lp.value(zeta, dy)[0])
    return ParametrixEval(float(theta), N, complex(zeta), value,
                          parametrix_prefactor(theta, adm.dim_space, zeta))


def heat_residual(adm: AdmField, theta: float, N: int, zeta, y, y_prime) -> complex:
    lp = local_parametrix(adm, theta, y_prime, N)
    dy = np.asarray(y, float) - np.asarray(y_prime, float)
    return complex(lp.heat_residual(zeta, dy)[0])


def predicted_diagonal_series(adm: AdmField, theta: float, N: int, y) -> list[complex]:
    """Coefficients ``c_n`` with ``(4 pi zeta)^{(d+1)/2} K(y,y) ~ sum c_n zeta^n``."""
    lp = local_parametrix(adm, theta, y, N)
    rot = rotation_factor(theta, adm.dim_space)
    k = 1j * cmath.exp(-1j * theta)
    return [complex(rot * a * k**n) for n, a in enumerate(lp.exp.solution.diagonal)]


def bump(x):
    """Smooth cutoff equal to 1 at 0 and vanishing for ``|x| >= 1``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(1 - 1 / (1 - x[inside] ** 2))
    return out


def parametrix_matrix(adm: AdmField, theta: float, N: int, zeta, nodes: np.ndarray,
                      weights: np.ndarray, periods, cutoff: float) -> np.ndarray:
    """Dense ``P[i, j] = F(y_i, y_j) chi(|dy|/r) w_j`` on a periodic node set.

    Separations use the minimal periodic image, so the operator acts on
    periodic functions; ``cutoff`` must lie inside the cone radius.
    """
    nodes = np.asarray(nodes, float)
    periods = np.asarray(periods, float)
    M = len(nodes)
    P = np.zeros((M, M), complex)
    for j in range(M):
        dy = nodes - nodes[j]
        dy -= periods * np.round(dy / periods)
        r = np.linalg.norm(dy, axis=1)
        near = r < cutoff
        lp = local_parametrix(adm, theta, nodes[j], N)
        vals = lp.value(zeta, dy[near])
        P[near, j] = vals * bump(r[near] / cutoff) * weights[j]
    return P
