"""Small-angle limit of exp(s A_theta) against the Schroedinger group exp(-i s D_-).

Traces against finite-rank probes ``T = sum_r u_r <v_r, .>_w`` reduce to
``tr[T X] = sum_r <v_r, X u_r>_w``, so each exponential is applied to
``rank`` vectors only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import expm_multiply

from .errors import ContractViolation
from .geometry import AdmField
from .lattice import (LORENTZIAN, LatticeOperator, TorusGrid, flat_fourier_eigenvalues,
                      hermiticity_deviation, operator_from_parts)


@dataclass
class TraceProbe:
    """Rank-``r`` operator ``T = sum_r u_r <v_r, .>_w``; ``u``, ``v`` have shape ``(r, M)``."""

    u: np.ndarray
    v: np.ndarray
    s: float
    theta_list: tuple = (0.4, 0.2, 0.1, 0.05)

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, complex))
        self.v = np.atleast_2d(np.asarray(self.v, complex))
        if self.u.shape != self.v.shape:
            raise ContractViolation("probe factors must have equal shapes")
        if self.s < 0:
            raise ContractViolation("s must be >= 0")
        t = list(self.theta_list)
        if any(a <= 0 for a in t) or any(b >= a for a, b in zip(t, t[1:])):
            raise ContractViolation("theta_list must be positive and strictly decreasing")

    @property
    def rank(self) -> int:
        return self.u.shape[0]

    def trace(self, weights) -> complex:
        return complex(np.sum(weights[None, :] * np.conj(self.v) * self.u))

    def trace_of(self, weights, images) -> complex:
        """``sum_r <v_r, X u_r>_w`` given ``images[r] = X u_r``."""
        return complex(np.sum(weights[None, :] * np.conj(self.v) * images))


def random_probe(grid: TorusGrid, rank: int, s: float, seed: int, smooth_modes: int = 2,
                 theta_list=(0.4, 0.2, 0.1, 0.05)) -> TraceProbe:
    """Probe with factors built from random low Fourier modes (``|k_mu| <= smooth_modes``)."""
    rng = np.random.default_rng(seed)
    nodes = grid.nodes()
    ks = np.array(np.meshgrid(*[np.arange(-smooth_modes, smooth_modes + 1)] * grid.dim,
                              indexing="ij")).reshape(grid.dim, -1).T
    phases = 2 * np.pi * nodes @ (ks / np.asarray(grid.periods)).T
    basis = np.exp(1j * phases)

    def factor():
        c = rng.standard_normal(len(ks)) + 1j * rng.standard_normal(len(ks))
        return basis @ c / len(ks)

    u = np.array([factor() for _ in range(rank)])
    v = np.array([factor() for _ in range(rank)])
    return TraceProbe(u, v, float(s), tuple(theta_list))


class SchrodingerGroup:
    """``exp(-i s A_-)`` from the Hermitian eigendecomposition of ``W^{1/2} A_- W^{-1/2}``."""

    def __init__(self, op_lorentzian: LatticeOperator, tol: float = 1e-10):
        if op_lorentzian.theta != LORENTZIAN:
            raise ContractViolation("schrodinger_group needs the lorentzian operator")
        dev = hermiticity_deviation(op_lorentzian)
        if dev > tol:
            raise ContractViolation(f"operator not Hermitian in <.,.>_w (deviation {dev:.3g})")
        s = np.sqrt(op_lorentzian.weights)
        B = (s[:, None] * op_lorentzian.dense) / s[None, :]
        B = 0.5 * (B + B.conj().T)
        self.eigenvalues, self.vectors = sla.eigh(B)
        self.sqrt_w = s
        self.op = op_lorentzian

    def apply(self, s: float, psi, sign: int = -1):
        """``exp(sign * i s A_-) psi``; columns of a matrix ``psi`` are evolved together."""
        psi = np.asarray(psi, complex)
        x = self.sqrt_w[:, None] * (psi if psi.ndim == 2 else psi[:, None])
        c = self.vectors.conj().T @ x
        c *= np.exp(sign * 1j * s * self.eigenvalues)[:, None]
        out = (self.vectors @ c) / self.sqrt_w[:, None]
        return out if psi.ndim == 2 else out[:, 0]


def schrodinger_group(op_lorentzian: LatticeOperator, s: float, psi) -> np.ndarray:
    return SchrodingerGroup(op_lorentzian).apply(float(s), psi)


def semigroup_images(op: LatticeOperator, s: float, vectors) -> np.ndarray:
    """Rows ``exp(s A) u_r`` with ``scipy.sparse.linalg.expm_multiply``."""
    U = np.asarray(vectors, complex)
    if s == 0:
        return U.copy()
    return expm_multiply(s * op.matrix.tocsc(), U.T).T


@dataclass
class GapRow:
    theta: float
    s: float
    rank: int
    gap: float
    gap_reflected: float


@dataclass
class GapScan:
    rows: list
    gap_right_angle: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def gaps(self, reflected: bool = False) -> np.ndarray:
        return np.array([r.gap_reflected if reflected else r.gap for r in self.rows])

    def strictly_decreasing(self, reflected: bool = False) -> bool:
        g = self.gaps(reflected)
        return bool(np.all(np.diff(g) < 0))

    def contraction_ratio(self, reflected: bool = False) -> float:
        """``gap(last) / gap(first)``."""
        g = self.gaps(reflected)
        return float(g[-1] / g[0])


def trace_gap(op_theta: LatticeOperator, group: SchrodingerGroup, probe: TraceProbe,
              op_reflected: LatticeOperator | None = None) -> tuple[float, float | None]:
    """``|tr[T e^{s A_theta}] - tr[T e^{-i s A_-}]|`` and the ``pi - theta`` branch
    against ``e^{+i s A_-}``."""
    if op_theta.size != group.op.size:
        raise ContractViolation("operators live on different grids")
    w = op_theta.weights
    ref = probe.trace_of(w, group.apply(probe.s, probe.u.T).T)
    val = probe.trace_of(w, semigroup_images(op_theta, probe.s, probe.u))
    gap = abs(val - ref)
    gap_r = None
    if op_reflected is not None:
        ref_r = probe.trace_of(w, group.apply(probe.s, probe.u.T, sign=+1).T)
        val_r = probe.trace_of(w, semigroup_images(op_reflected, probe.s, probe.u))
        gap_r = abs(val_r - ref_r)
    return float(gap), (None if gap_r is None else float(gap_r))


def gap_scan(parts, probe: TraceProbe, include_right_angle: bool = True) -> GapScan:
    """Both branches along ``probe.theta_list`` from shared ``LatticeParts``."""
    group = SchrodingerGroup(operator_from_parts(parts, LORENTZIAN))
    rows = []
    for th in probe.theta_list:
        g, gr = trace_gap(operator_from_parts(parts, th), group, probe,
                          operator_from_parts(parts, math.pi - th))
        rows.append(GapRow(float(th), probe.s, probe.rank, g, gr))
    right = None
    if include_right_angle:
        right, _ = trace_gap(operator_from_parts(parts, math.pi / 2), group, probe)
    return GapScan(rows, right)


def flat_trace_closed_form(grid: TorusGrid, adm: AdmField, theta: float, probe: TraceProbe,
                           reflected: bool = False) -> tuple[complex, complex]:
    """Fourier evaluation of ``tr[T e^{s A_theta}]`` and ``tr[T e^{-+ i s A_-}]`` (flat data).

    Plane waves diagonalize both operators; ``c_k = sum_r <v_r, P_k u_r>_w``.
    """
    lam = flat_fourier_eigenvalues(grid, adm, theta)
    lam_minus = flat_fourier_eigenvalues(grid, adm, LORENTZIAN)
    shape = grid.sizes
    M = grid.size
    dens = float(adm.density_values(np.zeros(adm.dim)))
    w = dens * grid.cell_volume
    uh = np.fft.fftn(probe.u.reshape((probe.rank,) + shape), axes=range(1, grid.dim + 1))
    vh = np.fft.fftn(probe.v.reshape((probe.rank,) + shape), axes=range(1, grid.dim + 1))
    c = (w / M) * np.sum(np.conj(vh) * uh, axis=0).ravel()
    sign = 1 if reflected else -1
    return (complex(np.sum(c * np.exp(probe.s * lam))),
            complex(np.sum(c * np.exp(sign * 1j * probe.s * lam_minus))))


def flat_gap_closed_form(grid: TorusGrid, adm: AdmField, theta: float, probe: TraceProbe) -> float:
    a, b = flat_trace_closed_form(grid, adm, theta, probe)
    return abs(a - b)
