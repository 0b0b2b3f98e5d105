"""Transport operator expansion and the triangular amplitude recursion.

Everything is anchored at ``y'`` and expressed as polynomials in
``dy = y - y'``.  Because ``kappa * s = S`` (with ``sigma = -i e^{i theta} S``),
the transport operator is

    L(s) = (g^{mu nu} d_mu d_nu S + gamma^mu d_mu S) + 2 g^{mu nu} d_mu S d_nu
         = (d+1) + sum_l dy^l [d_l + e_l^nu d_nu],     e^nu_mu = 2 delta^nu_mu.

With ``Y_n = kappa/2 [(2n - D) + L(s)] A_n`` and ``Z_n = -Delta_theta A_n``,
the conditions ``Y_0 = 0`` and ``Y_{n+1} + Z_n = 0`` read, on the
degree-``p`` part, ``(2n + 2p) A_n^{(p)} = -(rest_p + 2 Z_{n-1,p} / kappa)``
where ``rest`` involves only lower degrees.  In symmetric-tensor
normalization the multiplier is ``2n/p! + 2/(p-1)!``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .eikonal import SymJet, solve_eikonal_jets
from .errors import ContractViolation, InternalConsistencyError
from .geometry import AdmField, MetricJets, adm_jets, metric_jets
from .numeric import FLOAT
from .taylor import Ring, alpha_factorial, alpha_to_multi_index


def truncation_orders(N: int) -> dict:
    """``L = 2N + 8``, ``c_0 = 2N + 6``, ``c_n = 2N + 4``."""
    return {"L": 2 * N + 8, "c0": 2 * N + 6, "cn": 2 * N + 4}


def pivot(n: int, p: int) -> float:
    """Diagonal multiplier of the degree-``p`` system for ``A_n`` (tensor form)."""
    if p == 0:
        return float(2 * n)
    return 2 * n / math.factorial(p) + 2 / math.factorial(p - 1)


@dataclass
class LOperatorExpansion:
    """Symbols of ``L(s)`` about the base point.

    ``d_coeffs[idx]`` and ``e_coeffs[(nu, idx)]`` are the symmetric tensors
    multiplying ``dy^{mu_1}...dy^{mu_l}`` (no ``1/l!``).
    """

    d_coeffs: dict
    e_coeffs: dict
    constant_term: complex
    ring: Ring
    d_poly: np.ndarray
    e_poly: list
    theta: float
    L: int


def _tensor_table(poly, ring: Ring, lo: int, hi: int) -> dict:
    out = {}
    for alpha in ring.monomials:
        l = sum(alpha)
        if lo <= l <= hi and poly[alpha] != 0:
            out[alpha_to_multi_index(alpha)] = complex(poly[alpha]) * alpha_factorial(alpha) / math.factorial(l)
    return out


def expand_transport_operator(mj: MetricJets, s_jet: SymJet, theta: float) -> LOperatorExpansion:
    """Taylor-expand ``L(s)`` about ``y'`` through degree ``L - 2``."""
    if s_jet.anchor != "second":
        raise ContractViolation("transport expansion needs y'-anchored eikonal coefficients")
    L = s_jet.max_order + 1
    if mj.ring.degree < L - 1:
        raise ContractViolation(f"metric jets of order {mj.ring.degree} < {L - 1}")
    D = mj.ring.nvars
    big = Ring(D, L - 1, mj.ring.backend)
    ring = Ring(D, L - 2, mj.ring.backend)
    S = big.embed(s_jet.poly)
    dS = [big.deriv(S, mu) for mu in range(D)]
    ddS = [[big.deriv(dS[mu], nu) for nu in range(D)] for mu in range(D)]
    up = [[ring.embed(mj.upper[m][n]) for n in range(D)] for m in range(D)]
    gam = [ring.embed(mj.gamma[m]) for m in range(D)]
    dS = [ring.embed(p) for p in dS]
    ddS = [[ring.embed(p) for p in row] for row in ddS]
    d_poly = ring.zeros()
    for mu in range(D):
        d_poly = d_poly + ring.mul(gam[mu], dS[mu])
        for nu in range(D):
            d_poly = d_poly + ring.mul(up[mu][nu], ddS[mu][nu])
    e_poly = []
    for nu in range(D):
        acc = ring.zeros()
        for mu in range(D):
            acc = acc + ring.mul(up[mu][nu], dS[mu])
        e_poly.append(2 * acc)
    zero = (0,) * D
    d_coeffs = _tensor_table(d_poly, ring, 1, L - 2)
    e_coeffs = {}
    for nu in range(D):
        for idx, v in _tensor_table(e_poly[nu], ring, 1, L - 2).items():
            e_coeffs[(nu, idx)] = v
    return LOperatorExpansion(d_coeffs, e_coeffs, complex(d_poly[zero]), ring, d_poly, e_poly,
                              float(theta), L)


@dataclass
class TransportSolution:
    order: int
    a_polys: list
    a_jets: list
    diagonal: list
    ring: Ring
    base: tuple
    theta: float
    orders: dict
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "n", "re", "im"])
            y = " ".join(repr(float(v)) for v in self.base)
            for n, a in enumerate(self.diagonal):
                a = complex(a)
                w.writerow([y, n, repr(a.real), repr(a.imag)])


def _laplace_theta(ring: Ring, mj_up, mj_gamma, V, A, kappa):
    """``Delta_theta A = kappa (g dd A + gamma d A - V A)`` as a polynomial."""
    D = ring.nvars
    dA = [ring.deriv(A, mu) for mu in range(D)]
    acc = -ring.mul(V, A)
    for mu in range(D):
        acc = acc + ring.mul(mj_gamma[mu], dA[mu])
        ddA = [ring.deriv(dA[mu], nu) for nu in range(D)]
        for nu in range(D):
            acc = acc + ring.mul(mj_up[mu][nu], ddA[nu])
    return kappa * acc


def solve_transport(lop: LOperatorExpansion, mj: MetricJets, theta: float, N: int,
                    linear_tol: float = 1e-12) -> TransportSolution:
    """Forward substitution for ``A_0..A_N`` (no linear solver needed)."""
    orders = truncation_orders(N)
    if lop.L != orders["L"]:
        raise ContractViolation(f"L(s) expanded with L={lop.L}, need {orders['L']} for N={N}")
    c0, cn = orders["c0"], orders["cn"]
    D = lop.ring.nvars
    be = lop.ring.backend
    ring = Ring(D, c0 - 1, be)
    kappa = 1j * be.exp(-1j * be.real(theta))
    zero = (0,) * D
    if abs(complex(lop.constant_term) - D) > linear_tol:
        raise InternalConsistencyError(f"constant term {lop.constant_term} != {D}")
    d_rest = ring.embed(lop.d_poly)
    d_rest[zero] = 0
    e_rest = [ring.embed(p) for p in lop.e_poly]
    lin_dev = 0.0
    for nu in range(D):
        for mu in range(D):
            idx = tuple(1 if k == mu else 0 for k in range(D))
            lin_dev = max(lin_dev, abs(complex(e_rest[nu][idx]) - (2.0 if mu == nu else 0.0)))
            # the linear symbol is exactly 2 delta; its contribution is the pivot
            e_rest[nu][idx] = 0
        e_rest[nu][zero] = 0
    if lin_dev > linear_tol:
        raise InternalConsistencyError(f"linear first-order symbol deviates from 2 delta by {lin_dev:.3g}")

    def rest(A):
        out = ring.mul(d_rest, A)
        for nu in range(D):
            out = out + ring.mul(e_rest[nu], ring.deriv(A, nu))
        return out

    up = [[ring.embed(mj.upper[m][n]) for n in range(D)] for m in range(D)]
    gam = [ring.embed(g) for g in mj.gamma]
    V = ring.embed(mj.potential)
    pivots = {}
    A0 = ring.constant(1)
    for p in range(1, c0):
        piv = 2 * p
        pivots[(0, p)] = _check_pivot(0, p, piv)
        A0 = A0 - ring.homogeneous(rest(A0), p) / piv
    polys = [A0]
    for n in range(1, N + 1):
        Z_prev = -_laplace_theta(ring, up, gam, V, polys[-1], kappa)
        src = (2 / kappa) * Z_prev
        A = ring.zeros()
        for p in range(0, cn):
            piv = 2 * (n + p)
            pivots[(n, p)] = _check_pivot(n, p, piv)
            A = A - ring.homogeneous(rest(A) + src, p) / piv
        polys.append(A)
    a_jets = []
    for n, A in enumerate(polys):
        top = (c0 if n == 0 else cn) - 1
        a_jets.append({alpha_to_multi_index(a): complex(A[a]) * alpha_factorial(a)
                       for a in ring.monomials if sum(a) <= top})
    diagonal = [A[zero] for A in polys]
    return TransportSolution(N, polys, a_jets, diagonal, ring, mj.base, float(theta),
                             orders, {"pivots": pivots, "linear_symbol_deviation": lin_dev})


def _check_pivot(n: int, p: int, poly_pivot: int) -> float:
    tensor = pivot(n, p)
    if tensor == 0 or poly_pivot == 0:
        raise InternalConsistencyError(f"zero pivot at n={n}, p={p}")
    # polynomial normalization differs from the tensor one by p!
    if poly_pivot != round(tensor * math.factorial(p)):
        raise InternalConsistencyError(f"pivot mismatch at n={n}, p={p}")
    return tensor


@dataclass
class LocalExpansion:
    """Eikonal + transport data anchored at one base point."""

    adm: AdmField
    theta: float
    N: int
    base: tuple
    s_jet: SymJet
    lop: LOperatorExpansion
    solution: TransportSolution
    metric: MetricJets


def local_expansion(adm: AdmField, theta: float, y, N: int, backend=FLOAT) -> LocalExpansion:
    """Run eikonal and transport at ``y`` (as the ``y'`` anchor)."""
    L = truncation_orders(N)["L"]
    jet = adm_jets(adm, y, L - 1, backend)
    sj = solve_eikonal_jets(jet, theta, L, anchor="second")
    mj = metric_jets(jet, theta)
    lop = expand_transport_operator(mj, sj, theta)
    ts = solve_transport(lop, mj, theta, N)
    return LocalExpansion(adm, float(theta), N, jet.base, sj, lop, ts, mj)


def diagonal_coefficients(adm: AdmField, theta: float, y, N: int) -> list[complex]:
    """``A_n^theta(y)`` for ``n = 0..N``."""
    return [complex(a) for a in local_expansion(adm, theta, y, N).solution.diagonal]


@dataclass
class PointGeometry:
    """Analytic metric data at one point (exact, not Taylor-truncated)."""

    upper: list
    gamma: list
    potential: object


def point_geometry(adm: AdmField, theta, y, backend=FLOAT) -> PointGeometry:
    jet = adm_jets(adm, y, 1, backend)
    mj = metric_jets(jet, theta)
    zero = (0,) * adm.dim
    return PointGeometry([[g[zero] for g in row] for row in mj.upper],
                         [g[zero] for g in mj.gamma], mj.potential[zero])


def _poly_values(ring: Ring, poly, dy, D):
    val = ring.evaluate(poly, dy)
    grad = [ring.deriv(poly, mu) for mu in range(D)]
    g1 = [ring.evaluate(p, dy) for p in grad]
    g2 = [[ring.evaluate(ring.deriv(grad[mu], nu), dy) for nu in range(D)] for mu in range(D)]
    return val, g1, g2


def xyz_terms(exp: LocalExpansion, dy) -> dict:
    """Exact ``X_n``, ``Y_n``, ``Z_n`` at ``y = y' + dy`` (analytic metric)."""
    be = exp.solution.ring.backend
    D = len(exp.base)
    dy = [be.real(v) for v in dy]
    y = [b + v for b, v in zip(exp.base, dy)]
    pg = point_geometry(exp.adm, exp.theta, y, be)
    kappa = 1j * be.exp(-1j * be.real(exp.theta))
    pref = -1j * be.exp(1j * be.real(exp.theta))
    S, dS, ddS = _poly_values(exp.s_jet.ring, exp.s_jet.poly, dy, D)
    G, gam = pg.upper, pg.gamma
    gSS = sum(G[m][n] * dS[m] * dS[n] for m in range(D) for n in range(D))
    lapS = sum(G[m][n] * ddS[m][n] for m in range(D) for n in range(D)) + sum(
        gam[m] * dS[m] for m in range(D))
    E = pref * (S - gSS / 2)
    X, Y, Z = [], [], []
    for n, A in enumerate(exp.solution.a_polys):
        a, da, dda = _poly_values(exp.solution.ring, A, dy, D)
        Ls = lapS * a + 2 * sum(G[m][k] * dS[m] * da[k] for m in range(D) for k in range(D))
        X.append(kappa**2 / 2 * E * a)
        Y.append(kappa / 2 * ((2 * n - D) * a + Ls))
        lapA = sum(G[m][k] * dda[m][k] for m in range(D) for k in range(D)) + sum(
            gam[m] * da[m] for m in range(D))
        Z.append(-kappa * (lapA - pg.potential * a))
    return {"X": X, "Y": Y, "Z": Z, "E": E}


@dataclass
class ResidualProbe:
    radii: np.ndarray
    series: dict
    slopes: dict
    expected: dict

    @property
    def deficits(self) -> dict:
        return {k: self.expected[k] - self.slopes[k] for k in self.slopes}

    def passed(self, slack: float = 0.5) -> bool:
        return all(v <= slack for v in self.deficits.values())


def loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if keep.sum() < 2:
        return float("inf")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def residual_probe_XYZ(exp: LocalExpansion, direction, radii) -> ResidualProbe:
    """Slopes of ``|X_n|``, ``|Y_0|``, ``|Y_{n+1} + Z_n|`` along a ray."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    N = exp.N
    series = {f"X{n}": [] for n in range(N + 1)}
    series["Y0"] = []
    for n in range(N):
        series[f"Y{n + 1}+Z{n}"] = []
    for r in radii:
        t = xyz_terms(exp, r * direction)
        for n in range(N + 1):
            series[f"X{n}"].append(float(abs(t["X"][n])))
        series["Y0"].append(float(abs(t["Y"][0])))
        for n in range(N):
            series[f"Y{n + 1}+Z{n}"].append(float(abs(t["Y"][n + 1] + t["Z"][n])))
    slopes = {k: loglog_slope(radii, v) for k, v in series.items()}
    expected = {k: (2 * N + 8 if k.startswith("X") else 2 * N + 6 if k == "Y0" else 2 * N + 4)
                for k in series}
    return ResidualProbe(np.asarray(radii, float), {k: np.asarray(v) for k, v in series.items()},
                         slopes, expected)
