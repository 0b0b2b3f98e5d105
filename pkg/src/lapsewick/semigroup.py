"""Evaluation of exp(zeta A) by two routes and the analytic-semigroup checks.

Dense route: ``scipy.linalg.expm`` (scaling and squaring with Pade).
Contour route: trapezoidal rule on the hyperbola

    lambda(u) = mu (1 - sin(beta - i u)),   u in R,

whose asymptotes have arguments ``+-(pi/2 + beta)`` with ``beta < theta~``.
The lattice operator is bounded, so its spectrum lies in the truncated
cone ``{|arg w| >= pi/2 + theta~, |w| <= rho}``; ``mu``, ``beta`` and the
step minimise the scalar quadrature error of ``exp(zeta w)`` on the
boundary of that set.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContourBreakdownError, ContractViolation, SizeLimitError
from .lattice import LatticeOperator

DENSE_THRESHOLD = 4096
# non-normality allowance between the scalar model and the matrix error
MODEL_SAFETY = 100.0


@dataclass(frozen=True)
class SectorSpec:
    """``Sigma_alpha = {z != 0 : |arg z| < alpha}``."""

    alpha: float

    def __post_init__(self):
        if not (0 < self.alpha <= math.pi):
            raise ContractViolation("sector half-angle must lie in (0, pi]")

    def contains(self, z) -> bool:
        z = complex(z)
        return z != 0 and abs(cmath.phase(z)) < self.alpha

    @staticmethod
    def theta_tilde(theta: float) -> float:
        return min(theta, math.pi - theta)


@dataclass
class EvolutionResult:
    zeta: complex
    state: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# weighted norms


def weighted_matrix(op: LatticeOperator, X) -> np.ndarray:
    """``W^{1/2} X W^{-1/2}`` so that the weighted norm is the 2-norm."""
    s = np.sqrt(op.weights)
    return (s[:, None] * np.asarray(X)) / s[None, :]


def weighted_op_norm(op: LatticeOperator, X) -> float:
    return float(np.linalg.norm(weighted_matrix(op, X), 2))


def weighted_adjoint(op: LatticeOperator, X) -> np.ndarray:
    """``X^{dagger_w} = W^{-1} X^H W``."""
    w = op.weights
    return (np.conj(np.asarray(X)).T * w[None, :]) / w[:, None]


# ---------------------------------------------------------------------------
# dense route


def dense_propagator(op: LatticeOperator, zeta, threshold: int = DENSE_THRESHOLD) -> np.ndarray:
    if op.size > threshold:
        raise SizeLimitError(
            f"M={op.size} exceeds the dense threshold {threshold}; use evolve_contour")
    zeta = complex(zeta)
    if zeta == 0:
        return np.eye(op.size, dtype=complex)
    return sla.expm(zeta * op.dense)


def evolve_dense(op: LatticeOperator, zeta, psi, threshold: int = DENSE_THRESHOLD) -> EvolutionResult:
    T = dense_propagator(op, zeta, threshold)
    return EvolutionResult(complex(zeta), T @ np.asarray(psi, complex), "dense-exponential", {})


# ---------------------------------------------------------------------------
# contour route


@dataclass(frozen=True)
class HyperbolicContour:
    """Nodes ``lambda(u_j)`` with ``u_j = step (j - (count-1)/2)``."""

    mu: float
    beta: float
    step: float
    count: int

    def parameters(self) -> np.ndarray:
        return self.step * (np.arange(self.count) - (self.count - 1) / 2)

    def nodes(self) -> np.ndarray:
        u = self.parameters()
        return self.mu * (1 - np.sin(self.beta - 1j * u))

    def derivatives(self) -> np.ndarray:
        u = self.parameters()
        return 1j * self.mu * np.cos(self.beta - 1j * u)


def spectral_radius_bound(op: LatticeOperator) -> float:
    """``sqrt(||B||_1 ||B||_inf) >= ||B||_2`` for ``B = W^{1/2} A W^{-1/2}``.

    Bounds the weighted numerical range, hence the spectrum.
    """
    s = np.sqrt(op.weights)
    B = sp.diags(s) @ op.matrix @ sp.diags(1 / s)
    absB = abs(B)
    n1 = float(absB.sum(axis=0).max())
    ninf = float(absB.sum(axis=1).max())
    return math.sqrt(n1 * ninf)


def enclosure_boundary(theta_tilde: float, rho: float, n_ray: int = 60,
                       n_arc: int = 30) -> np.ndarray:
    """Boundary of ``{|arg w| >= pi/2 + theta~, |w| <= rho}``."""
    ang = math.pi / 2 + theta_tilde
    r = np.linspace(0.0, rho, n_ray)
    arc = rho * np.exp(1j * np.linspace(ang, 2 * math.pi - ang, n_arc))
    return np.concatenate([r * np.exp(1j * ang), r * np.exp(-1j * ang), arc])


def model_error(contour: HyperbolicContour, zeta, boundary) -> float:
    """Scalar trapezoidal error for ``exp(zeta w)`` over ``boundary`` plus rounding.

    The error is holomorphic inside the contour, so its maximum over the
    spectral enclosure is attained on ``boundary``.
    """
    lam = contour.nodes()
    with np.errstate(all="ignore"):
        t = np.exp(zeta * lam) * contour.derivatives()
        if not np.all(np.isfinite(t)):
            return math.inf
        dist = lam[None, :] - boundary[:, None]
        if np.min(np.abs(dist)) == 0:
            return math.inf
        f = contour.step / (2j * math.pi) * (t[None, :] / dist).sum(axis=1)
        err = float(np.max(np.abs(f - np.exp(zeta * boundary))))
    rounding = 1e-16 * float(np.sum(np.abs(t))) * contour.step
    return err + rounding


def hyperbolic_contour(theta_tilde: float, zeta, quad_points: int, rho: float,
                       beta=None, mu=None, step=None) -> tuple[HyperbolicContour, float]:
    """Hyperbola minimising :func:`model_error`; returns ``(contour, model error)``.

    ``zeta`` may be a sequence, in which case the worst model error over it
    is minimised (one contour serving a whole window).  ``beta`` ranges over
    ``(max |arg zeta|, theta~)`` so the asymptotes open into
    ``Sigma_{pi/2+beta}``; ``mu`` and the half-length are searched on log and
    linear grids.  Explicit ``beta``, ``mu``, ``step`` pin those parameters.
    """
    zs = np.atleast_1d(np.asarray(zeta, complex))
    if np.any(zs == 0):
        raise ContractViolation("zeta must be nonzero")
    phi = float(np.max(np.abs(np.angle(zs))))
    top = min(theta_tilde, math.pi / 2)
    if phi >= top:
        raise ContractViolation(f"|arg zeta|={phi:.4g} not below {top:.4g}")
    if quad_points < 16:
        raise ContractViolation("quad_points must be >= 16")
    boundary = enclosure_boundary(top, rho)
    n = int(quad_points)
    gap = top - phi
    betas = [beta] if beta is not None else list(phi + gap * np.array([0.3, 0.5, 0.7, 0.85, 0.95, 0.985]))
    mus = [mu] if mu is not None else list(np.exp(np.linspace(math.log(rho / 100), math.log(rho * 4), 28)))
    halves = [step * (n - 1) / 2] if step is not None else list(np.linspace(0.5, 6.0, 23))
    best = (math.inf, None)
    for b in betas:
        for m in mus:
            for a in halves:
                c = HyperbolicContour(float(m), float(b), 2 * float(a) / (n - 1), n)
                e = 0.0
                for z in zs:
                    e = max(e, model_error(c, z, boundary))
                    if e >= best[0]:
                        break
                if e < best[0]:
                    best = (e, c)
    if best[1] is None:
        raise ContourBreakdownError("no admissible hyperbola found for the requested parameters")
    return best[1], best[0]


def auto_quad_points(op: LatticeOperator, zeta, tol: float, start: int = 48,
                     limit: int = 512) -> int:
    """Smallest count in ``start * 2^k`` whose model error is below ``tol / 100``."""
    rho = spectral_radius_bound(op)
    n = start
    while n <= limit:
        _, err = hyperbolic_contour(op.theta_tilde, zeta, n, rho)
        if err <= tol / 100:
            return n
        n *= 2
    return limit


class ShiftedSolver:
    """Solves with ``lambda I - A`` (SuperLU; dense LU below ``dense_limit``)."""

    def __init__(self, op: LatticeOperator, dense_limit: int = 0):
        self.op = op
        self.dense = op.size <= dense_limit

    def solve(self, lam, rhs):
        A = self.op
        try:
            if self.dense:
                lu = sla.lu_factor(lam * np.eye(A.size) - A.dense, check_finite=True)
                x = sla.lu_solve(lu, rhs)
            else:
                mat = (lam * sp.identity(A.size, format="csc") - A.matrix.tocsc()).tocsc()
                x = spla.splu(mat).solve(np.asarray(rhs, complex))
        except (sla.LinAlgError, RuntimeError, ValueError) as exc:
            raise ContourBreakdownError(f"shifted solve failed at lambda={lam:.6g}: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise ContourBreakdownError(f"non-finite resolvent at lambda={lam:.6g}")
        return x


def evolve_contour(op: LatticeOperator, zeta, psi, quad_points: int = 48,
                   contour: HyperbolicContour | None = None, solver=None) -> EvolutionResult:
    """``T(zeta) psi = (1/2 pi i) int exp(zeta lambda) (lambda - A)^{-1} psi d lambda``.

    ``psi`` may be a vector or a matrix of column vectors.  Diagnostics hold
    ``error_estimate`` (``MODEL_SAFETY`` times the scalar model error on the
    spectral enclosure) and ``half_rule_difference`` (distance to the rule on
    every other node, which overstates the error of geometric convergence).
    Node contributions are summed in node order.
    """
    zeta = complex(zeta)
    psi = np.asarray(psi, complex)
    if zeta == 0:
        return EvolutionResult(zeta, psi.copy(), "contour", {"error_estimate": 0.0})
    rho = spectral_radius_bound(op)
    if contour is None:
        contour, merr = hyperbolic_contour(op.theta_tilde, zeta, quad_points, rho)
    else:
        merr = model_error(contour, zeta, enclosure_boundary(min(op.theta_tilde, math.pi / 2), rho))
    solver = solver or ShiftedSolver(op)
    full = np.zeros_like(psi)
    half = np.zeros_like(psi)
    for j, (l, dl) in enumerate(zip(contour.nodes(), contour.derivatives())):
        term = np.exp(zeta * l) * dl * solver.solve(l, psi)
        full = full + term
        if j % 2 == 0:
            half = half + term
    full *= contour.step / (2j * math.pi)
    half *= 2 * contour.step / (2j * math.pi)
    scale = max(float(np.max(np.abs(full))), 1e-300)
    err = float(np.max(np.abs(full - half))) / scale
    diag = {"error_estimate": MODEL_SAFETY * merr, "half_rule_difference": err,
            "model_error": merr, "nodes": contour.count, "mu": contour.mu,
            "beta": contour.beta, "step": contour.step, "rho_bound": rho}
    return EvolutionResult(zeta, full, "contour", diag)

def evolve_contour_window(op: LatticeOperator, zetas, psi, quad_points: int = 64,
                          contour: HyperbolicContour | None = None, solver=None,
                          extract=None) -> list[EvolutionResult]:
    """``T(zeta) psi`` for every ``zeta`` in a window from one set of node solves.

    The resolvent solves do not depend on ``zeta``, so a single contour tuned
    for the whole window serves all of them.  ``extract`` (an index array)
    keeps only those entries of each solve.
    """
    zs = [complex(z) for z in zetas]
    psi = np.asarray(psi, complex)
    rho = spectral_radius_bound(op)
    if contour is None:
        contour, merr = hyperbolic_contour(op.theta_tilde, zs, quad_points, rho)
    else:
        bd = enclosure_boundary(min(op.theta_tilde, math.pi / 2), rho)
        merr = max(model_error(contour, z, bd) for z in zs)
    solver = solver or ShiftedSolver(op)
    lam = contour.nodes()
    dlam = contour.derivatives()
    sols = []
    for l in lam:
        x = solver.solve(l, psi)
        sols.append(x if extract is None else x[extract])
    sols = np.asarray(sols)
    out = []
    for z in zs:
        coef = np.exp(z * lam) * dlam * contour.step / (2j * math.pi)
        state = np.tensordot(coef, sols, axes=(0, 0))
        out.append(EvolutionResult(z, state, "contour", {
            "error_estimate": MODEL_SAFETY * merr, "model_error": merr,
            "nodes": contour.count, "mu": contour.mu, "beta": contour.beta,
            "step": contour.step, "rho_bound": rho}))
    return out


# ---------------------------------------------------------------------------
# resolvent norms


def resolvent_norm(op: LatticeOperator, lam, method: str = "auto", iters: int = 200,
                   seed: int = 0, tol: float = 1e-10) -> tuple[float, bool]:
    """``||(lambda - A)^{-1}||_w``; returns ``(norm, converged)``.

    ``method='svd'`` is exact (dense); ``'power'`` runs power iteration on
    ``R^{dagger_w} R`` with sparse factorizations.
    """
    lam = complex(lam)
    if method == "auto":
        method = "svd" if op.size <= 2304 else "power"
    if method == "svd":
        B = weighted_matrix(op, lam * np.eye(op.size) - op.dense)
        smin = sla.svdvals(B)[-1]
        return (float("inf") if smin == 0 else 1.0 / float(smin)), True
    mat = (lam * sp.identity(op.size, format="csc") - op.matrix.tocsc()).tocsc()
    lu = spla.splu(mat)
    w = op.weights
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
    x /= op.norm(x)
    est = 0.0
    for _ in range(iters):
        y = lu.solve(x)
        # weighted adjoint of R is W^{-1} R^H W
        z = lu.solve(w * y, trans="H") / w
        new = math.sqrt(max(op.norm(y) ** 2, 0.0))
        x = z / op.norm(z)
        if abs(new - est) <= tol * new:
            return new, True
        est = new
    return est, False


def sample_sector(alpha: float, n: int, rmin: float, rmax: float, seed: int = 0) -> np.ndarray:
    """Points with ``|arg| < alpha`` (open) and log-uniform moduli."""
    rng = np.random.default_rng(seed)
    ang = rng.uniform(-alpha, alpha, n) * (1 - 1e-6)
    rad = np.exp(rng.uniform(math.log(rmin), math.log(rmax), n))
    return rad * np.exp(1j * ang)


@dataclass
class NormScanRow:
    lam: complex
    norm: float
    bound: float
    kind: str
    converged: bool

    @property
    def ratio(self) -> float:
        return self.norm / self.bound


def resolvent_norm_scan(op: LatticeOperator, lambda_samples, theta_prime=None,
                        method: str = "auto", sharp_slack: float = 1e-8,
                        sector_slack: float = 0.1) -> list[NormScanRow]:
    """Norms with the applicable bound: ``(1+slack)/|lambda|`` on ``Sigma_{theta~}``
    and ``C/|lambda|``, ``C = (1+10%)/sin(theta~ - theta~')``, on ``Sigma_{pi/2+theta~'}``."""
    tt = op.theta_tilde
    rows = []
    for lam in np.asarray(lambda_samples, complex):
        ang = abs(cmath.phase(lam))
        norm, conv = resolvent_norm(op, lam, method)
        if ang < tt:
            rows.append(NormScanRow(complex(lam), norm, (1 + sharp_slack) / abs(lam), "sharp", conv))
        else:
            tp = theta_prime if theta_prime is not None else max(ang - math.pi / 2, 0.0)
            if ang >= math.pi / 2 + tt or tp >= tt:
                raise ContractViolation(f"lambda={lam} outside Sigma_(pi/2+theta~')")
            C = (1 + sector_slack) / math.sin(tt - tp)
            rows.append(NormScanRow(complex(lam), norm, C / abs(lam), "sector", conv))
    return rows


# ---------------------------------------------------------------------------
# contract suite


@dataclass
class ContractReport:
    entries: dict

    def max_deviation(self, key: str) -> float:
        return float(self.entries[key])


def semigroup_contract_suite(op: LatticeOperator, op_reflected: LatticeOperator, zetas,
                             psi_batch=None, h_list=(1e-3, 5e-4, 2.5e-4)) -> ContractReport:
    """Dense checks (a)-(e) on a small operator.

    (a) semigroup law over all pairs, (b) contractivity, (c) weighted adjoint
    law against ``pi - theta`` at ``conj(zeta)``, (d) generator consistency
    order in ``h`` on ``psi_batch``, (e) ``|zeta|^n ||A^n T(zeta)||`` for
    ``n <= 3`` (finite, with the fitted per-step constant).
    """
    zetas = [complex(z) for z in zetas]
    T = {z: dense_propagator(op, z) for z in zetas}
    law = 0.0
    for i, z1 in enumerate(zetas):
        for z2 in zetas[i:]:
            prod = T[z1] @ T[z2]
            ref = dense_propagator(op, z1 + z2)
            law = max(law, weighted_op_norm(op, prod - ref))
    contr = max(max(weighted_op_norm(op, T[z]) - 1.0, 0.0) for z in zetas)
    adj = 0.0
    for z in zetas:
        refl = dense_propagator(op_reflected, np.conj(z))
        adj = max(adj, weighted_op_norm(op, weighted_adjoint(op, T[z]) - refl))
    entries = {"semigroup_law": law, "contractivity_excess": contr, "adjoint_law": adj}
    if psi_batch is not None:
        psi = np.atleast_2d(np.asarray(psi_batch, complex)).T
        Apsi = op.dense @ psi
        errs = []
        for h in h_list:
            diff = (dense_propagator(op, h) @ psi - psi) / h - Apsi
            errs.append(max(op.norm(diff[:, k]) for k in range(psi.shape[1])))
        slope = float(np.polyfit(np.log(h_list), np.log(errs), 1)[0])
        entries["generator_errors"] = errs
        entries["generator_order"] = slope
    growth = []
    A = op.dense
    for z in zetas:
        row = []
        P = T[z]
        for n in range(1, 4):
            P = A @ P
            nrm = weighted_op_norm(op, P)
            row.append(abs(z) * nrm ** (1 / n) / n)
        growth.append(row)
    entries["derivative_constants"] = growth
    entries["derivative_finite"] = bool(np.all(np.isfinite(growth)))
    return ContractReport(entries)
