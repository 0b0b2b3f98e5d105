"""Scalar backends for the jet algebra.

Two backends share one interface: ``FLOAT`` works on numpy complex128 arrays
and ``MpBackend`` works on object arrays of ``mpmath.mpc``.  The high
precision backend exists only so that residual scaling laws can be measured
far below double-precision rounding; all production paths use ``FLOAT``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np


class FloatBackend:
    name = "float"
    dtype = np.complex128
    pi = math.pi

    def scalar(self, x):
        return complex(x)

    def real(self, x):
        return float(x)

    def cos(self, x):
        return cmath.cos(x)

    def sin(self, x):
        return cmath.sin(x)

    def exp(self, x):
        return cmath.exp(x)

    def sqrt(self, x):
        return cmath.sqrt(x)

    def log(self, x):
        return cmath.log(x)

    def asarray(self, values):
        return np.asarray(values, dtype=np.complex128)

    def zeros(self, shape):
        return np.zeros(shape, dtype=np.complex128)

    def to_complex(self, a):
        return np.asarray(a, dtype=np.complex128)


@dataclass(frozen=True)
class MpBackend:
    """mpmath backend; callers must hold ``mpmath.mp.workdps(dps)``."""

    dps: int = 60
    name: str = "mp"
    dtype: type = object

    @property
    def pi(self):
        import mpmath

        return mpmath.mp.pi

    def scalar(self, x):
        import mpmath

        return mpmath.mpc(x)

    def real(self, x):
        import mpmath

        return mpmath.mpf(x)

    def cos(self, x):
        import mpmath

        return mpmath.cos(x)

    def sin(self, x):
        import mpmath

        return mpmath.sin(x)

    def exp(self, x):
        import mpmath

        return mpmath.exp(x)

    def sqrt(self, x):
        import mpmath

        return mpmath.sqrt(x)

    def log(self, x):
        import mpmath

        return mpmath.log(x)

    def asarray(self, values):
        import mpmath

        arr = np.asarray(values, dtype=object)
        out = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            out[idx] = mpmath.mpc(arr[idx])
        return out

    def zeros(self, shape):
        import mpmath

        out = np.empty(shape, dtype=object)
        for idx in np.ndindex(out.shape):
            out[idx] = mpmath.mpc(0)
        return out

    def to_complex(self, a):
        arr = np.asarray(a, dtype=object)
        out = np.empty(arr.shape, dtype=np.complex128)
        for idx in np.ndindex(arr.shape):
            out[idx] = complex(arr[idx])
        return out


FLOAT = FloatBackend()


def backend_for(dps: int | None):
    """Return ``FLOAT`` for ``dps=None`` and an mpmath backend otherwise."""
    return FLOAT if dps is None else MpBackend(dps=dps)
