"""Discrete kernels of exp(zeta A), the kernel laws and diagonal asymptotics.

Convention: ``K[i, j] = (T(zeta) e_j)[i] / w_j`` so that
``(T(zeta) psi)_i = sum_j w_j K[i, j] psi_j``.  The diagonal ``K[i, i]``
approximates the continuum kernel on the diagonal without extra factors.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .errors import ContractViolation, FitWindowError, SizeLimitError
from .geometry import AdmField
from .lattice import LatticeOperator, TorusGrid, assemble_delta_theta
from .parametrix import predicted_diagonal_series, rotation_factor
from .semigroup import (DENSE_THRESHOLD, dense_propagator, evolve_contour,
                        evolve_contour_window)


@dataclass
class KernelMatrix:
    zeta: complex
    theta: object
    entries: np.ndarray
    weights: np.ndarray
    method: str = "dense-exponential"

    def apply(self, psi):
        """``(T psi)_i = sum_j w_j K[i, j] psi_j``."""
        return self.entries @ (self.weights * np.asarray(psi, complex))


def build_kernel(op: LatticeOperator, zeta, method: str = "dense",
                 threshold: int = DENSE_THRESHOLD, quad_points: int = 96) -> KernelMatrix:
    """Kernel from the columns ``T(zeta) e_j / w_j``.

    ``method='dense'`` uses the matrix exponential; ``'contour'`` evolves all
    coordinate vectors at once along the quadrature contour.
    """
    if op.size > threshold:
        raise SizeLimitError(f"M={op.size} exceeds the kernel threshold {threshold}")
    zeta = complex(zeta)
    if method == "dense":
        T = dense_propagator(op, zeta, threshold)
        tag = "dense-exponential"
    elif method == "contour":
        T = evolve_contour(op, zeta, np.eye(op.size, dtype=complex), quad_points).state
        tag = "contour"
    else:
        raise ContractViolation(f"unknown kernel method {method!r}")
    return KernelMatrix(zeta, op.theta, T / op.weights[None, :], op.weights.copy(), tag)


def reproduction_error(km: KernelMatrix, op: LatticeOperator, psi) -> float:
    """Relative max error of the weighted kernel sum against ``T(zeta) psi``."""
    ref = dense_propagator(op, km.zeta) @ np.asarray(psi, complex)
    return float(np.max(np.abs(km.apply(psi) - ref)) / np.max(np.abs(ref)))


def hermiticity_pairing(km: KernelMatrix, km_reflected: KernelMatrix) -> float:
    """``max |K^theta_zeta[i,j] - conj(K^{pi-theta}_{conj zeta}[j,i])| / max |K|``."""
    diff = km.entries - np.conj(km_reflected.entries.T)
    return float(np.max(np.abs(diff)) / np.max(np.abs(km.entries)))


def chapman_kolmogorov(k1: KernelMatrix, k2: KernelMatrix, k12: KernelMatrix) -> float:
    """``max |sum_k w_k K1[i,k] K2[k,j] - K12[i,j]| / max |K12|``."""
    prod = (k1.entries * k1.weights[None, :]) @ k2.entries
    return float(np.max(np.abs(prod - k12.entries)) / np.max(np.abs(k12.entries)))


def kernel_difference(a: KernelMatrix, b: KernelMatrix) -> float:
    return float(np.max(np.abs(a.entries - b.entries)) / np.max(np.abs(b.entries)))


@dataclass
class HeatResidual:
    zeta: complex
    step: float
    residual: float
    bound: float
    real_residual: bool


def heat_equation_residual(op: LatticeOperator, kernels) -> HeatResidual:
    """Centered ``d/dzeta K - A K`` at the middle of three equally spaced kernels.

    The residual is relative to ``max |A K|``; ``bound`` is the centered
    differencing error ``step^2 max|A^3 K| / 6`` on the same scale.
    """
    if len(kernels) != 3:
        raise ContractViolation("heat_equation_residual needs three kernels")
    k0, k1, k2 = kernels
    step = k1.zeta - k0.zeta
    if abs((k2.zeta - k1.zeta) - step) > 1e-12 * abs(step):
        raise ContractViolation("kernels must be equally spaced in zeta")
    A = op.dense
    dK = (k2.entries - k0.entries) / (2 * step)
    AK = A @ k1.entries
    scale = float(np.max(np.abs(AK)))
    res = float(np.max(np.abs(dK - AK))) / scale
    bound = abs(step) ** 2 * float(np.max(np.abs(A @ (A @ AK)))) / 6 / scale
    real = bool(np.max(np.abs(k1.entries.imag)) <= 1e-12 * np.max(np.abs(k1.entries)))
    return HeatResidual(complex(k1.zeta), abs(step), res, bound, real)


# ---------------------------------------------------------------------------
# diagonal asymptotics


def diagonal_values(op: LatticeOperator, index: int, zetas, quad_points: int = 64) -> np.ndarray:
    """``K[i, i]`` for every ``zeta`` from one contour (no dense kernel)."""
    rhs = np.zeros(op.size, complex)
    rhs[index] = 1.0 / op.weights[index]
    res = evolve_contour_window(op, zetas, rhs, quad_points, extract=np.array([index]))
    return np.array([r.state[0] for r in res])


def default_window(grid: TorusGrid, count: int = 8) -> np.ndarray:
    """Geometric grid on ``[25 h^2, (period / 8)^2]`` with the coarsest ``h``."""
    h = float(np.max(grid.spacings))
    lo, hi = 25 * h * h, (min(grid.periods) / 8) ** 2
    if lo >= hi:
        raise FitWindowError(f"empty fit window [{lo:.3g}, {hi:.3g}]; refine the grid")
    return np.geomspace(lo, hi, count)


@dataclass
class DiagonalFit:
    theta: float
    y: tuple
    zetas: np.ndarray
    sizes: tuple
    values: dict
    extrapolated: np.ndarray
    observed_order: float | None
    fitted: np.ndarray
    predicted: np.ndarray
    relative_deviation: np.ndarray
    condition: float
    diagnostics: dict = field(default_factory=dict)


def _check_window(zetas, grid: TorusGrid):
    z = np.asarray(zetas, float)
    if np.any(z <= 0):
        raise FitWindowError("the fit window must be real and positive")
    h = float(np.max(grid.spacings))
    if z.min() < h * h or z.max() > min(grid.periods) ** 2 / 4:
        raise FitWindowError(f"window [{z.min():.3g}, {z.max():.3g}] outside [h^2, period^2/4]")
    if z.max() / z.min() < 1.5:
        raise FitWindowError("window too narrow for a stable fit")


def richardson(coarse, fine, order: float = 2.0):
    r = 2.0**order
    return (r * np.asarray(fine) - np.asarray(coarse)) / (r - 1)


def fit_diagonal_asymptotics(adm: AdmField, theta: float, y, zeta_grid, N: int,
                             sizes=(64, 128), order_check_size: int | None = 32,
                             fit_order: int | None = None, quad_points: int = 64,
                             max_condition: float = 1e8) -> DiagonalFit:
    """Fit ``(4 pi zeta)^{(d+1)/2} K[i,i]`` on refined lattices.

    The two finest grids in ``sizes`` (uniform size per axis, each a
    doubling of the previous) are combined by Richardson extrapolation with
    assumed order 2; ``order_check_size`` adds a coarser grid to measure the
    order empirically.  The least-squares basis is
    ``rot * (i e^{-i theta} zeta)^n`` for ``n <= fit_order`` (default
    ``N + 1``, which absorbs the first omitted term); ``A_n`` for ``n <= N``
    are returned.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(b != 2 * a for a, b in zip(sizes, sizes[1:])):
        raise ContractViolation("sizes must be successive doublings, at least two")
    D = adm.dim
    zetas = np.asarray(zeta_grid, float)
    coarse = TorusGrid((sizes[-2],) * D, adm.periods)
    _check_window(zetas, coarse)
    fit_order = N + 1 if fit_order is None else int(fit_order)
    if fit_order < N:
        raise ContractViolation("fit_order must be >= N")
    all_sizes = sizes if order_check_size is None else (order_check_size,) + sizes
    values = {}
    for n in all_sizes:
        grid = TorusGrid((n,) * D, adm.periods)
        op = assemble_delta_theta(grid, adm, theta)
        idx = grid.nearest_index(y)
        node = grid.nodes()[idx]
        if np.max(np.abs(node - np.asarray(y, float))) > 1e-12:
            raise ContractViolation(f"y={y} is not a node of the {n}-grid")
        values[n] = diagonal_values(op, idx, zetas, quad_points)
    ext = richardson(values[sizes[-2]], values[sizes[-1]])
    observed = None
    if order_check_size is not None:
        d1 = np.abs(values[all_sizes[0]] - values[all_sizes[1]])
        d2 = np.abs(values[all_sizes[1]] - values[all_sizes[2]])
        observed = float(np.median(np.log2(d1 / d2)))
    rot = rotation_factor(theta, D - 1)
    kappa = 1j * cmath.exp(-1j * theta)
    target = (4 * math.pi * zetas) ** (D / 2) * ext / rot
    V = np.stack([(kappa * zetas) ** n for n in range(fit_order + 1)], axis=1)
    cond = float(np.linalg.cond(V))
    if cond > max_condition:
        raise FitWindowError(f"Vandermonde condition {cond:.3g} exceeds {max_condition:.3g}")
    coef = np.linalg.lstsq(V, target, rcond=None)[0]
    pred = predicted_diagonal_series(adm, theta, N, tuple(float(v) for v in y))
    pred_A = np.array([c / (rot * kappa**n) for n, c in enumerate(pred)])
    fitted = coef[: N + 1]
    rel = np.abs(fitted - pred_A) / np.maximum(np.abs(pred_A), 1e-300)
    return DiagonalFit(float(theta), tuple(y), zetas, sizes, values, ext, observed, fitted,
                       pred_A, rel, cond, {"fit_order": fit_order, "all_coefficients": coef})


@dataclass
class RemainderFit:
    N: int
    zetas: np.ndarray
    difference: np.ndarray
    exponent: float
    normalized_exponent: float
    threshold: float
    halving_ratios: np.ndarray
    super_polynomial: bool
    c_theory: float
    adjusted_N0: float


def difference_to_parametrix(adm: AdmField, theta: float, N: int, zetas, values,
                             y, sigma0: int = 1, floor: float = 1e-12) -> RemainderFit:
    """Fit ``|K(y,y) - F^N_zeta(y,y)| ~ c zeta^p`` from diagonal values.

    ``exponent`` is ``p`` for the raw difference; ``normalized_exponent``
    applies to ``(4 pi zeta)^{(d+1)/2} |K - F^N|`` and equals ``N + 1`` when
    the first omitted series term dominates.  ``threshold`` is the
    theory-adjusted bound ``N + 1 - c_theory - 0.5`` with
    ``c_theory = 2 sigma0 + (d+1)/2``; ``adjusted_N0`` is the truncation
    order ``N - c_theory`` at which the series term dominates.
    """
    zetas = np.asarray(zetas, float)
    D = adm.dim
    pred = predicted_diagonal_series(adm, theta, N, tuple(float(v) for v in y))
    F = np.array([sum(c * z**n for n, c in enumerate(pred)) / (4 * math.pi * z) ** (D / 2)
                  for z in zetas])
    diff = np.abs(np.asarray(values) - F)
    norm = diff * (4 * math.pi * zetas) ** (D / 2)
    c_theory = 2 * sigma0 + D / 2
    if np.all(norm < floor):
        return RemainderFit(N, zetas, diff, math.inf, math.inf, N + 1 - c_theory - 0.5,
                            np.array([]), True, c_theory, N - c_theory)
    lz = np.log(zetas)
    p = float(np.polyfit(lz, np.log(diff), 1)[0])
    order = np.argsort(zetas)
    z, dd = zetas[order], diff[order]
    # ratios across zeta pairs closest to a factor 2
    ratios = []
    for k, zk in enumerate(z):
        j = int(np.argmin(np.abs(z - 2 * zk)))
        if j != k and abs(z[j] / zk - 2) < 0.3:
            ratios.append(float(dd[j] / dd[k]) / (z[j] / zk) ** p)
    return RemainderFit(N, zetas, diff, p, p + D / 2, N + 1 - c_theory - 0.5, np.array(ratios),
                        False, c_theory, N - c_theory)


# ---------------------------------------------------------------------------
# smoothing


def sigma_m(m: int, d: int) -> int:
    """Smallest integer strictly greater than ``m/2 + (d+1)/4``."""
    return int(math.floor(m / 2 + (d + 1) / 4)) + 1


def surrogate_norm(grid: TorusGrid, u, m: int) -> float:
    """Discrete ``C^m`` norm: max of periodic forward differences of order ``<= m``."""
    U = np.asarray(u).reshape(grid.sizes)
    h = grid.spacings
    best = float(np.max(np.abs(U)))
    layer = [U]
    for _ in range(m):
        nxt = []
        for V in layer:
            for ax in range(grid.dim):
                W = (np.roll(V, -1, axis=ax) - V) / h[ax]
                nxt.append(W)
                best = max(best, float(np.max(np.abs(W))))
        layer = nxt
    return best


@dataclass
class SmoothingFit:
    m: int
    sigma: int
    zetas: np.ndarray
    norms: np.ndarray
    exponent: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.exponent <= self.bound


def _fit_blowup(zetas, norms) -> float:
    """Least squares of ``log n = log c + log(1 + zeta^{-sigma})``."""
    lz, ln = np.log(zetas), np.log(norms)

    def model(lz_, logc, sig):
        return logc + np.logaddexp(0.0, -sig * lz_)

    slope = -np.polyfit(lz, ln, 1)[0]
    start = (float(ln.max() - np.log1p(np.exp(-max(slope, 0.1) * lz.min()))), max(slope, 0.1))
    popt, _ = curve_fit(model, lz, ln, p0=start, maxfev=20000)
    return float(popt[1])


def white_noise(grid: TorusGrid, seed: int) -> np.ndarray:
    """Discrete white noise: unit-variance samples scaled by ``cell_volume^{-1/2}``."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(grid.size) / math.sqrt(grid.cell_volume)


def smoothing_rate_probe(op: LatticeOperator, psi_rough, zeta_grid, m_list=(0, 1, 2),
                         quad_points: int = 64) -> list[SmoothingFit]:
    """Fit surrogate ``C^m`` norms of ``T(zeta) psi`` to ``c (1 + zeta^{-sigma})``."""
    zetas = np.asarray(zeta_grid, float)
    d = op.grid.dim - 1
    states = [r.state for r in evolve_contour_window(op, zetas, psi_rough, quad_points)]
    out = []
    for m in m_list:
        norms = np.array([surrogate_norm(op.grid, s, m) for s in states])
        sig = sigma_m(m, d)
        out.append(SmoothingFit(m, sig, zetas, norms, _fit_blowup(zetas, norms), sig + 0.5))
    return out
