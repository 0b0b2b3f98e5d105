"""Divergence-form lattice discretization of Delta_theta on a periodic grid.

The quadratic form of ``-nabla^2_pm`` is discretized cell by cell,

    Q_pm(u) = sum_cells vol [ sum_mu c^{mu mu} mean_e |D^e_mu u|^2
                              + sum_{mu != nu} c^{mu nu} conj(Dbar_mu u) Dbar_nu u ],

with ``c = |g|^{1/2} g_pm^{..}`` sampled at cell centres, ``D^e_mu`` the
forward difference along the cell edges parallel to ``mu`` and ``Dbar_mu``
their average.  ``Q_pm = u^H M_pm u`` with ``M_pm`` real symmetric, and
averaging over independent edge choices shows ``Q_+ >= |Q_-|`` cellwise.
Then

    A_theta = W^{-1} (-sin theta M_+ - i cos theta M_-) - i e^{-i theta} V,

so ``W A_theta`` is complex symmetric and ``(W A_theta)^H = W A_{pi-theta}``
holds by construction.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .errors import ContractViolation
from .geometry import AdmField

LORENTZIAN = "lorentzian"


@dataclass(frozen=True)
class TorusGrid:
    sizes: tuple[int, ...]
    periods: tuple[float, ...]

    def __post_init__(self):
        if len(self.sizes) != len(self.periods):
            raise ContractViolation("sizes and periods must have equal length")
        if any(int(n) < 3 for n in self.sizes):
            raise ContractViolation("every grid size must be >= 3")

    @property
    def dim(self) -> int:
        return len(self.sizes)

    @property
    def spacings(self) -> np.ndarray:
        return np.asarray(self.periods, float) / np.asarray(self.sizes, float)

    @property
    def size(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axes(self):
        return [np.arange(n) * h for n, h in zip(self.sizes, self.spacings)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(M_tot, D)`` in C (row-major) order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def cell_centres(self) -> np.ndarray:
        return self.nodes() + 0.5 * self.spacings

    def index(self, multi) -> np.ndarray:
        multi = np.asarray(multi)
        wrapped = np.mod(multi, np.asarray(self.sizes))
        return np.ravel_multi_index(tuple(np.moveaxis(wrapped, -1, 0)), self.sizes)

    def nearest_index(self, y) -> int:
        k = np.rint(np.asarray(y, float) / self.spacings).astype(int)
        return int(self.index(k))

    def refine(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(tuple(n * factor for n in self.sizes), self.periods)


@dataclass
class LatticeParts:
    """Theta-independent pieces: ``M_+``, ``M_-`` (real symmetric), weights, V."""

    grid: TorusGrid
    m_plus: sp.csr_matrix
    m_minus: sp.csr_matrix
    weights: np.ndarray
    potential: np.ndarray
    warnings: list = field(default_factory=list)


@dataclass
class LatticeOperator:
    matrix: sp.csr_matrix
    weights: np.ndarray
    theta: object
    grid: TorusGrid
    parts: LatticeParts | None = None
    warnings: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def theta_tilde(self) -> float:
        if self.theta == LORENTZIAN:
            return 0.0
        return min(self.theta, math.pi - self.theta)

    @cached_property
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def inner(self, u, v) -> complex:
        """``<u, v>_w = sum w_i conj(u_i) v_i``."""
        return complex(np.sum(self.weights * np.conj(u) * v))

    def norm(self, u) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(u) ** 2)))

    def apply(self, u):
        return self.matrix @ u

    def export_triplets(self, path, weights_path=None) -> None:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("row col re im\n")
            for k in order:
                v = coo.data[k]
                fh.write(f"{coo.row[k]} {coo.col[k]} {v.real!r} {v.imag!r}\n")
        if weights_path is not None:
            np.savetxt(weights_path, self.weights, fmt="%.17g")


def _difference_operators(grid: TorusGrid):
    """Edge differences ``D^e_mu`` (list over edges) and averages ``Dbar_mu``.

    Rows are cells (indexed by their lower corner), columns nodes.
    """
    D = grid.dim
    h = grid.spacings
    cells = np.indices(grid.sizes).reshape(D, -1).T
    rows = np.arange(grid.size)
    edges, means = [], []
    for mu in range(D):
        others = [k for k in range(D) if k != mu]
        ops = []
        for offs in itertools.product((0, 1), repeat=D - 1):
            lo = np.zeros(D, int)
            for k, o in zip(others, offs):
                lo[k] = o
            hi = lo.copy()
            hi[mu] += 1
            c_hi = grid.index(cells + hi)
            c_lo = grid.index(cells + lo)
            data = np.concatenate([np.full(grid.size, 1 / h[mu]), np.full(grid.size, -1 / h[mu])])
            op = sp.csr_matrix((data, (np.concatenate([rows, rows]), np.concatenate([c_hi, c_lo]))),
                               shape=(grid.size, grid.size))
            ops.append(op)
        edges.append(ops)
        means.append(sum(ops[1:], ops[0]) / len(ops))
    return edges, means


def _form_matrix(grid: TorusGrid, coeff: np.ndarray, edges, means) -> sp.csr_matrix:
    D = grid.dim
    vol = grid.cell_volume
    M = sp.csr_matrix((grid.size, grid.size))
    for mu in range(D):
        c = sp.diags(vol * coeff[:, mu, mu])
        for op in edges[mu]:
            M = M + (op.T @ c @ op) / len(edges[mu])
        for nu in range(D):
            if nu != mu:
                M = M + means[mu].T @ sp.diags(vol * coeff[:, mu, nu]) @ means[nu]
    M = M.tocsr()
    M.sum_duplicates()
    M.sort_indices()
    return M


def assemble_parts(grid: TorusGrid, adm: AdmField) -> LatticeParts:
    if grid.dim != adm.dim:
        raise ContractViolation("grid dimension differs from geometry dimension")
    warnings = []
    need = 4 * adm.max_wave()
    if np.any(np.asarray(grid.sizes) < need):
        warnings.append(f"grid {grid.sizes} under-resolves Fourier content (need >= {need.tolist()})")
    grid = TorusGrid(tuple(grid.sizes), tuple(adm.periods))
    centres = grid.cell_centres()
    dens_c = adm.density_values(centres)
    c_plus = dens_c[:, None, None] * adm.inverse_metric_values(centres, "plus")
    c_minus = dens_c[:, None, None] * adm.inverse_metric_values(centres, "minus")
    edges, means = _difference_operators(grid)
    m_plus = _form_matrix(grid, c_plus, edges, means)
    m_minus = _form_matrix(grid, c_minus, edges, means)
    nodes = grid.nodes()
    weights = adm.density_values(nodes) * grid.cell_volume
    return LatticeParts(grid, m_plus, m_minus, weights, adm.potential_values(nodes), warnings)


def operator_from_parts(parts: LatticeParts, theta) -> LatticeOperator:
    winv = sp.diags(1.0 / parts.weights)
    if theta == LORENTZIAN:
        # D_- = -nabla^2_- + V, Hermitian in the weighted inner product
        mat = winv @ parts.m_minus + sp.diags(parts.potential)
        mat = mat.astype(complex)
    else:
        theta = float(theta)
        if not (0 < theta < math.pi):
            raise ContractViolation(f"theta={theta} outside (0, pi)")
        s, c = math.sin(theta), math.cos(theta)
        kappa = 1j * cmath.exp(-1j * theta)
        mat = winv @ (-s * parts.m_plus - 1j * c * parts.m_minus) - kappa * sp.diags(parts.potential)
    mat = sp.csr_matrix(mat, dtype=complex)
    mat.sum_duplicates()
    mat.sort_indices()
    return LatticeOperator(mat, parts.weights.copy(), theta, parts.grid, parts, list(parts.warnings))


def assemble_delta_theta(grid: TorusGrid, adm: AdmField, theta) -> LatticeOperator:
    """Assemble ``Delta_theta`` (or ``D_-`` for ``theta='lorentzian'``)."""
    return operator_from_parts(assemble_parts(grid, adm), theta)


def adjoint_deviation(op: LatticeOperator, op_reflected: LatticeOperator) -> float:
    """``max |W A_theta - (W A_{pi-theta})^H| / max |W A_theta|``."""
    W = sp.diags(op.weights)
    a = (W @ op.matrix).tocsr()
    b = (sp.diags(op_reflected.weights) @ op_reflected.matrix).conj().T.tocsr()
    diff = abs(a - b)
    scale = abs(a).max()
    return float(diff.max() / scale) if diff.nnz else 0.0


def hermiticity_deviation(op: LatticeOperator) -> float:
    W = sp.diags(op.weights)
    a = (W @ op.matrix).tocsr()
    diff = abs(a - a.conj().T)
    return float(diff.max() / abs(a).max()) if diff.nnz else 0.0


def cell_form(grid: TorusGrid, coeff: np.ndarray, u) -> complex:
    """``sum_cells vol [...]`` for the coefficient field ``coeff`` (cells, D, D)."""
    edges, means = _difference_operators(grid)
    vol = grid.cell_volume
    D = grid.dim
    total = 0j
    for mu in range(D):
        for op in edges[mu]:
            total += np.sum(vol * coeff[:, mu, mu] * np.abs(op @ u) ** 2) / len(edges[mu])
        for nu in range(D):
            if nu != mu:
                total += np.sum(vol * coeff[:, mu, nu] * np.conj(means[mu] @ u) * (means[nu] @ u))
    return total


def integration_by_parts_residual(op: LatticeOperator, adm: AdmField, u) -> float:
    """``|<u, A u>_w - form(u)| / |<u, A u>_w|`` with the form built from edges."""
    grid = op.grid
    centres = grid.cell_centres()
    dens = adm.density_values(centres)
    q_plus = cell_form(grid, dens[:, None, None] * adm.inverse_metric_values(centres, "plus"), u)
    q_minus = cell_form(grid, dens[:, None, None] * adm.inverse_metric_values(centres, "minus"), u)
    pot = np.sum(op.weights * adm.potential_values(grid.nodes()) * np.abs(u) ** 2)
    if op.theta == LORENTZIAN:
        form = q_minus + pot
    else:
        th = op.theta
        form = -(math.sin(th) * q_plus + 1j * math.cos(th) * q_minus) - 1j * cmath.exp(-1j * th) * pot
    lhs = op.inner(u, op.apply(u))
    return float(abs(lhs - form) / max(abs(lhs), 1e-300))


# ---------------------------------------------------------------------------
# spectra


def cone_distance(q, theta_tilde: float) -> np.ndarray:
    """Distance of ``q`` to the closed set ``C \\ Sigma_{pi/2 + theta_tilde}``."""
    q = np.asarray(q, complex)
    phi = np.abs(np.angle(q))
    edge = math.pi / 2 + theta_tilde
    gap = edge - phi
    out = np.where(gap <= 0, 0.0, np.where(gap < math.pi / 2, np.abs(q) * np.sin(np.maximum(gap, 0)), np.abs(q)))
    return out


@dataclass
class NumericalRangeResult:
    quotients: np.ndarray
    max_distance: float
    max_relative_distance: float


def numerical_range_probe(op: LatticeOperator, samples: int = 200, seed: int = 0,
                          extra=None) -> NumericalRangeResult:
    """Rayleigh quotients of random (and optional given) vectors."""
    rng = np.random.default_rng(seed)
    M = op.size
    vecs = rng.standard_normal((samples, M)) + 1j * rng.standard_normal((samples, M))
    if extra is not None:
        vecs = np.vstack([vecs, np.atleast_2d(extra)])
    Av = (op.matrix @ vecs.T).T
    num = np.sum(op.weights * np.conj(vecs) * Av, axis=1)
    den = np.sum(op.weights * np.abs(vecs) ** 2, axis=1)
    q = num / den
    dist = cone_distance(q, op.theta_tilde)
    scale = np.maximum(np.abs(q), 1.0)
    return NumericalRangeResult(q, float(dist.max()), float((dist / scale).max()))


def dense_spectrum(op: LatticeOperator, max_size: int = 2304) -> np.ndarray:
    if op.size > max_size:
        raise ContractViolation(f"dense spectrum refused for M={op.size} > {max_size}")
    return np.linalg.eigvals(op.dense)


@dataclass
class WedgeResult:
    theta: float
    eigenvalues: np.ndarray
    max_angle_violation: float
    floor: float

    def passed(self, tol: float = 1e-9) -> bool:
        return self.max_angle_violation <= tol


def wedge_check(eigs, theta: float, floor: float | None = None) -> WedgeResult:
    """Largest angular excess of eigenvalues inside ``Sigma_{pi/2 + theta_tilde}``.

    Eigenvalues below ``floor`` in magnitude (default ``1e-9 * max|lambda|``)
    have no meaningful argument and count as the boundary point 0.
    """
    eigs = np.asarray(eigs, complex)
    tt = min(theta, math.pi - theta)
    if floor is None:
        floor = 1e-9 * max(np.abs(eigs).max(), 1.0)
    big = np.abs(eigs) > floor
    excess = (math.pi / 2 + tt) - np.abs(np.angle(eigs[big]))
    worst = float(max(excess.max(initial=0.0), 0.0))
    return WedgeResult(theta, eigs, worst, float(floor))


def fourier_symbol(grid: TorusGrid, coeff: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``M`` for constant coefficient matrix ``coeff`` (D x D)."""
    D = grid.dim
    h = grid.spacings
    ks = np.meshgrid(*[np.arange(n) for n in grid.sizes], indexing="ij")
    a = [2 * np.pi * k / n for k, n in zip(ks, grid.sizes)]
    out = np.zeros(ks[0].shape)
    for mu in range(D):
        out = out + coeff[mu, mu] * 4 * np.sin(a[mu] / 2) ** 2 / h[mu] ** 2
        for nu in range(D):
            if nu != mu:
                out = out + coeff[mu, nu] * np.sin(a[mu]) * np.sin(a[nu]) / (h[mu] * h[nu])
    return out.ravel() * grid.cell_volume


def flat_fourier_eigenvalues(grid: TorusGrid, adm: AdmField, theta) -> np.ndarray:
    """Exact spectrum of the assembled operator for constant ADM data."""
    if not adm.is_flat:
        raise ContractViolation("Fourier oracle needs constant ADM data")
    y0 = np.zeros(adm.dim)
    dens = float(adm.density_values(y0))
    mp = fourier_symbol(grid, dens * adm.inverse_metric_values(y0, "plus"))
    mm = fourier_symbol(grid, dens * adm.inverse_metric_values(y0, "minus"))
    w = dens * grid.cell_volume
    V = float(adm.potential_values(y0))
    if theta == LORENTZIAN:
        return mm / w + V
    s, c = math.sin(theta), math.cos(theta)
    return (-s * mp - 1j * c * mm) / w - 1j * cmath.exp(-1j * theta) * V


def spectrum_match(eigs, reference) -> float:
    """Largest distance under the optimal one-to-one matching of two multisets."""
    a = np.asarray(eigs, complex)
    b = np.asarray(reference, complex)
    if a.shape != b.shape:
        raise ContractViolation("multisets of different sizes")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())
