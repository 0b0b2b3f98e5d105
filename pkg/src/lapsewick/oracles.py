"""Independent symbolic oracles built with sympy from textbook curvature formulas.

These share no code with the jet machinery: the metric is rebuilt
symbolically from the Fourier data and differentiated by sympy.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import sympy as sp

from .geometry import AdmField, FourierField


def _field_expr(f: FourierField, coords, periods):
    expr = sp.Float(f.constant)
    for m in f.modes:
        phase = sum(2 * sp.pi * k * c / sp.Float(p) for k, c, p in zip(m.wave, coords, periods))
        expr += sp.Float(m.cos) * sp.cos(phase) + sp.Float(m.sin) * sp.sin(phase)
    return expr


def symbolic_theta_metric(adm: AdmField, theta: float):
    """``(coords, g)`` with ``g = -e^{-2 i theta} N^2 dt^2 + hat g (dx + N dt)^2``."""
    D = adm.dim
    coords = sp.symbols(f"y0:{D}", real=True)
    P = adm.periods
    N = _field_expr(adm.lapse, coords, P)
    shift = [_field_expr(s, coords, P) for s in adm.shift]
    gh = [[_field_expr(adm.spatial_metric[a][b], coords, P) for b in range(D - 1)]
          for a in range(D - 1)]
    phase = sp.exp(-2 * sp.I * sp.Float(theta))
    low = [sum(gh[a][b] * shift[b] for b in range(D - 1)) for a in range(D - 1)]
    g = sp.zeros(D, D)
    g[0, 0] = -phase * N**2 + sum(shift[a] * low[a] for a in range(D - 1))
    for a in range(D - 1):
        g[0, a + 1] = g[a + 1, 0] = low[a]
        for b in range(D - 1):
            g[a + 1, b + 1] = gh[a][b]
    return coords, g


def ricci_scalar(coords, g, point) -> complex:
    """``R = g^{mu nu} R_{mu nu}`` at ``point`` from Christoffel symbols.

    ``g`` and its first two derivatives come from sympy; the Christoffel
    symbols ``G^a_{bc}`` and their derivatives (with
    ``d g^{-1} = -g^{-1} (d g) g^{-1}``) are assembled numerically.
    """
    D = len(coords)
    subs = {c: sp.Float(v, 30) for c, v in zip(coords, point)}
    val = lambda e: complex(sp.N(sp.sympify(e).subs(subs), 25))  # noqa: E731
    g0 = np.array([[val(g[a, b]) for b in range(D)] for a in range(D)])
    d1 = np.array([[[val(sp.diff(g[a, b], coords[c])) for c in range(D)]
                    for b in range(D)] for a in range(D)])
    d2 = np.array([[[[val(sp.diff(g[a, b], coords[c], coords[e])) for e in range(D)]
                     for c in range(D)] for b in range(D)] for a in range(D)])
    ginv = np.linalg.inv(g0)
    # lowered Christoffel G_{e,bc} = (d_c g_eb + d_b g_ec - d_e g_bc) / 2 and its derivative
    low = 0.5 * (np.einsum("ebc->ebc", d1) + np.einsum("ecb->ebc", d1) - np.einsum("bce->ebc", d1))
    dlow = 0.5 * (np.einsum("ebcf->ebcf", d2) + np.einsum("ecbf->ebcf", d2)
                  - np.einsum("bcef->ebcf", d2))
    gam = np.einsum("ae,ebc->abc", ginv, low)
    dginv = -np.einsum("ap,pqf,qe->aef", ginv, d1, ginv)
    dgam = np.einsum("aef,ebc->abcf", dginv, low) + np.einsum("ae,ebcf->abcf", ginv, dlow)
    # R_{bc} = d_a G^a_{bc} - d_c G^a_{ab} + G^a_{ae} G^e_{bc} - G^a_{ce} G^e_{ab}
    ric = (np.einsum("abca->bc", dgam) - np.einsum("abac->bc", dgam)
           + np.einsum("aae,ebc->bc", gam, gam) - np.einsum("ace,eab->bc", gam, gam))
    return complex(np.einsum("bc,bc->", ginv, ric))


def a1_oracle(adm: AdmField, theta: float, y) -> complex:
    """Seeley-DeWitt ``a_1 = R[g^theta] / 6 - V`` at ``y``."""
    coords, g = symbolic_theta_metric(adm, theta)
    V = float(adm.potential.evaluate(np.asarray(y, float), adm.periods))
    return ricci_scalar(coords, g, y) / 6 - V


def flat_potential_coefficients(V: float, n_max: int) -> list[float]:
    """``A_n = (-V)^n / n!`` for constant ``V`` on flat data."""
    return [(-V) ** n / math.factorial(n) for n in range(n_max + 1)]


def metric_derivatives(adm: AdmField, theta: float, y):
    """``g^theta_{ab}``, ``d_c g_{ab}`` and ``d_c d_e g_{ab}`` at ``y`` via sympy."""
    coords, g = symbolic_theta_metric(adm, theta)
    D = len(coords)
    subs = {c: sp.Float(v, 30) for c, v in zip(coords, y)}
    val = lambda e: complex(sp.N(sp.sympify(e).subs(subs), 25))  # noqa: E731
    g0 = np.array([[val(g[a, b]) for b in range(D)] for a in range(D)])
    d1 = np.array([[[val(sp.diff(g[a, b], coords[c])) for c in range(D)]
                    for b in range(D)] for a in range(D)])
    d2 = np.array([[[[val(sp.diff(g[a, b], coords[c], coords[e])) for e in range(D)]
                     for c in range(D)] for b in range(D)] for a in range(D)])
    return g0, d1, d2


def _symmetrize(t: np.ndarray) -> np.ndarray:
    perms = list(itertools.permutations(range(t.ndim)))
    return sum(np.transpose(t, p) for p in perms) / len(perms)


def closed_form_coefficients(adm: AdmField, theta: float, y) -> dict:
    """Symmetrized low-order world-function coefficients at ``y``.

    ``s2 = g``, ``s3 = -3/2 d g`` and
    ``s4 = 2 dd g - 1/4 g^{rs} d_r g d_s g + g^{rs} d_r g_{12} d_3 g_{s4}
    - g^{rs} d_1 g_{r2} d_3 g_{s4}``, all symmetrized over the free indices.
    """
    g, d1, d2 = metric_derivatives(adm, theta, y)
    gi = np.linalg.inv(g)
    # d1[a, b, c] = d_c g_ab ; d2[a, b, c, e] = d_c d_e g_ab
    s3 = -1.5 * np.einsum("bca->abc", d1)
    t4 = 2 * np.einsum("cdab->abcd", d2)
    t4 = t4 - 0.25 * np.einsum("rs,abr,cds->abcd", gi, d1, d1)
    t4 = t4 + np.einsum("rs,abr,sdc->abcd", gi, d1, d1)
    t4 = t4 - np.einsum("rs,rba,sdc->abcd", gi, d1, d1)
    return {2: g, 3: _symmetrize(s3), 4: _symmetrize(t4)}
