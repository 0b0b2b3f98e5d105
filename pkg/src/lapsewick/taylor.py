"""Truncated multivariate Taylor polynomials.

A polynomial in ``n`` variables truncated at total degree ``K`` is a dense
array of shape ``(K+1,)*n`` whose entry ``c[alpha]`` is the coefficient of
``x**alpha``; entries with ``|alpha| > K`` are kept at zero.  Products use
shifted slice accumulation, which is exact in the sense that every output
coefficient is a finite sum of products of input coefficients (no FFT).
"""

from __future__ import annotations

import itertools
import math
from functools import cached_property

import numpy as np

from .numeric import FLOAT


class Ring:
    """Truncated polynomial ring in ``nvars`` variables, total degree ``degree``."""

    def __init__(self, nvars: int, degree: int, backend=FLOAT):
        if nvars < 1 or degree < 0:
            raise ValueError("need nvars >= 1 and degree >= 0")
        self.nvars = int(nvars)
        self.degree = int(degree)
        self.backend = backend
        self.shape = (self.degree + 1,) * self.nvars

    def __repr__(self):
        return f"Ring(nvars={self.nvars}, degree={self.degree}, backend={self.backend.name})"

    @cached_property
    def degrees(self) -> np.ndarray:
        grids = np.indices(self.shape)
        return grids.sum(axis=0)

    @cached_property
    def mask(self) -> np.ndarray:
        return self.degrees <= self.degree

    @cached_property
    def monomials(self) -> list[tuple[int, ...]]:
        """Multi-indices with total degree <= K in graded lexicographic order."""
        out = []
        for p in range(self.degree + 1):
            out.extend(compositions(p, self.nvars))
        return out

    @cached_property
    def _slices(self):
        K = self.degree
        table = {}
        for idx in self.monomials:
            out_sl = tuple(slice(i, K + 1) for i in idx)
            in_sl = tuple(slice(0, K + 1 - i) for i in idx)
            table[idx] = (out_sl, in_sl)
        return table

    # construction ---------------------------------------------------------
    def zeros(self):
        return self.backend.zeros(self.shape)

    def constant(self, value):
        a = self.zeros()
        a[(0,) * self.nvars] = self.backend.scalar(value)
        return a

    def variable(self, mu: int, scale=1):
        a = self.zeros()
        if self.degree >= 1:
            idx = [0] * self.nvars
            idx[mu] = 1
            a[tuple(idx)] = self.backend.scalar(scale)
        return a

    def from_coefficients(self, coeffs: dict):
        a = self.zeros()
        for idx, value in coeffs.items():
            if sum(idx) <= self.degree:
                a[tuple(idx)] = self.backend.scalar(value)
        return a

    def embed(self, a):
        """Copy a polynomial from a ring with the same nvars but other degree."""
        out = self.zeros()
        k = min(a.shape[0], self.degree + 1)
        sl = (slice(0, k),) * self.nvars
        out[sl] = a[sl]
        out[~self.mask] = 0
        return out

    # arithmetic -----------------------------------------------------------
    def mul(self, a, b):
        if _nnz(b) < _nnz(a):
            a, b = b, a
        out = self.zeros()
        for idx in self.monomials:
            c = a[idx]
            if c == 0:
                continue
            out_sl, in_sl = self._slices[idx]
            out[out_sl] += c * b[in_sl]
        out[~self.mask] = 0
        return out

    def mul_many(self, *factors):
        result = factors[0]
        for f in factors[1:]:
            result = self.mul(result, f)
        return result

    def deriv(self, a, mu: int):
        """Partial derivative with respect to variable ``mu`` (same shape)."""
        out = self.zeros()
        K = self.degree
        src = [slice(None)] * self.nvars
        dst = [slice(None)] * self.nvars
        src[mu] = slice(1, K + 1)
        dst[mu] = slice(0, K)
        factor_shape = [1] * self.nvars
        factor_shape[mu] = K
        factors = np.arange(1, K + 1).reshape(factor_shape)
        out[tuple(dst)] = a[tuple(src)] * factors
        return out

    def homogeneous(self, a, p: int, axes=None):
        """Part of ``a`` of degree ``p`` in the variables ``axes`` (default all)."""
        deg = self.partial_degrees(axes)
        out = self.zeros()
        sel = deg == p
        out[sel] = a[sel]
        return out

    def truncate(self, a, p: int, axes=None):
        deg = self.partial_degrees(axes)
        out = a.copy()
        out[deg > p] = 0
        return out

    def partial_degrees(self, axes=None):
        if axes is None:
            return self.degrees
        key = tuple(sorted(axes))
        cache = self.__dict__.setdefault("_pdeg", {})
        if key not in cache:
            grids = np.indices(self.shape)
            cache[key] = sum(grids[ax] for ax in key) if key else np.zeros(self.shape, int)
        return cache[key]

    def reciprocal(self, a):
        """Series reciprocal; the constant term must be nonzero."""
        c0 = a[(0,) * self.nvars]
        if c0 == 0:
            raise ZeroDivisionError("reciprocal of a series with zero constant term")
        u = a / c0
        u[(0,) * self.nvars] -= 1
        r = self.constant(1)
        for _ in range(self.degree):
            r = self.constant(1) - self.mul(u, r)
        return r / c0

    def sqrt(self, a):
        """Principal-branch series square root."""
        zero = (0,) * self.nvars
        c0 = a[zero]
        root0 = self.backend.sqrt(c0)
        u = a / c0
        u[zero] -= 1
        coeffs = [_binom_half(k) for k in range(self.degree + 1)]
        r = self.constant(coeffs[-1])
        for k in range(self.degree - 1, -1, -1):
            r = self.mul(u, r)
            r[zero] += coeffs[k]
        return r * root0

    # evaluation -----------------------------------------------------------
    def evaluate(self, a, point):
        """Value at a single point (sequence of ``nvars`` scalars)."""
        val = a
        for mu in range(self.nvars):
            x = point[mu]
            pw = [1]
            for _ in range(self.degree):
                pw.append(pw[-1] * x)
            pw = np.asarray(pw, dtype=object if a.dtype == object else np.complex128)
            val = np.tensordot(pw, val, axes=([0], [0]))
        return val[()] if isinstance(val, np.ndarray) else val

    def evaluate_many(self, a, points):
        """Vectorized float evaluation at points of shape ``(m, nvars)``."""
        pts = np.asarray(points, dtype=np.complex128)
        powers = pts[:, :, None] ** np.arange(self.degree + 1)[None, None, :]
        val = np.einsum("mi,i...->m...", powers[:, 0, :], a)
        for mu in range(1, self.nvars):
            val = np.einsum("mi,mi...->m...", powers[:, mu, :], val)
        return val

    def max_abs(self, a, degree_max=None):
        sel = self.mask if degree_max is None else self.degrees <= degree_max
        vals = a[sel]
        if vals.size == 0:
            return 0.0
        return max(float(abs(v)) for v in vals.ravel())


def _nnz(a) -> int:
    return int(np.count_nonzero(a != 0))


def _binom_half(k: int) -> float:
    # binomial(1/2, k)
    out = 1.0
    for j in range(k):
        out *= (0.5 - j) / (j + 1)
    return out


def compositions(total: int, parts: int):
    """All multi-indices of length ``parts`` summing to ``total`` (lex order)."""
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


def alpha_factorial(alpha) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def multi_index_to_alpha(indices, nvars: int) -> tuple[int, ...]:
    """Sorted tensor index ``(mu_1, ..., mu_n)`` to exponent vector."""
    alpha = [0] * nvars
    for mu in indices:
        alpha[mu] += 1
    return tuple(alpha)


def alpha_to_multi_index(alpha) -> tuple[int, ...]:
    return tuple(itertools.chain.from_iterable([mu] * a for mu, a in enumerate(alpha)))


def substitute_difference(a, ring: Ring, pairs, sign: int = -1):
    """Substitute ``x_p -> x_p + sign * x_q`` for each axis pair ``(p, q)``.

    Used for the Taylor shift between coefficients anchored at ``y'`` and at
    ``y``.  Total degree is preserved, so truncation stays consistent.
    """
    K = ring.degree
    out = a
    for p, q in pairs:
        src = np.moveaxis(out, (p, q), (0, 1))
        dst = ring.backend.zeros(src.shape)
        for i in range(K + 1):
            for k in range(i + 1):
                shift = i - k
                coef = math.comb(i, k) * sign**shift
                # x_p**i = sum_k C(i,k) x_p**k (sign x_q)**(i-k)
                dst[k, shift:] += coef * src[i, : K + 1 - shift]
        out = np.moveaxis(dst, (0, 1), (p, q))
        out = np.ascontiguousarray(out)
        out[~ring.mask] = 0
    return out
