"""ADM foliation data, the lapse-rotated complex metric and its jets.

Conventions
-----------
Coordinates are ``y = (t, x^1, ..., x^d)`` with ``D = d + 1``.  The rotated
metric is

    g^theta = -exp(-2i theta) N^2 dt^2 + hat g_ab (dx^a + N^a dt)(dx^b + N^b dt)

so ``theta = pi/2`` is the Euclidean metric ``g+`` and ``theta -> 0`` the
Lorentzian ``g-``.  The volume density ``|g|^{1/2} = N sqrt(det hat g)`` is
real and independent of ``theta``.  The operator is

    Delta_theta = kappa (nabla^2_theta - V),    kappa = i exp(-i theta),

with ``nabla^2_theta u = g^{mu nu} d_mu d_nu u + gamma^mu d_mu u`` and
``gamma^mu = |g|^{-1/2} d_nu(|g|^{1/2} g^{nu mu})``.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InvalidGeometryError
from .numeric import FLOAT
from .taylor import Ring, alpha_factorial


# ---------------------------------------------------------------------------
# Fourier fields


@dataclass(frozen=True)
class FourierMode:
    """One real mode ``c cos(phi) + s sin(phi)`` with ``phi = 2 pi k.y / P``."""

    wave: tuple[int, ...]
    cos: float = 0.0
    sin: float = 0.0


@dataclass(frozen=True)
class FourierField:
    """Finite real Fourier series on the torus."""

    constant: float = 0.0
    modes: tuple[FourierMode, ...] = ()

    @property
    def is_constant(self) -> bool:
        return all(m.cos == 0 and m.sin == 0 for m in self.modes)

    def max_wave(self, dim: int) -> np.ndarray:
        k = np.zeros(dim, dtype=int)
        for m in self.modes:
            k = np.maximum(k, np.abs(np.asarray(m.wave)))
        return k

    def evaluate(self, points, periods) -> np.ndarray:
        """Values at ``points`` of shape ``(..., D)``."""
        pts = np.asarray(points, dtype=float)
        out = np.full(pts.shape[:-1], float(self.constant))
        for m in self.modes:
            omega = 2 * np.pi * np.asarray(m.wave, dtype=float) / np.asarray(periods, dtype=float)
            phase = pts @ omega
            out = out + m.cos * np.cos(phase) + m.sin * np.sin(phase)
        return out

    def taylor(self, base, periods, ring: Ring):
        """Exact Taylor coefficients about ``base`` in ``ring``.

        ``d^alpha cos(phi) = omega^alpha cos(phi + |alpha| pi / 2)``, and the
        same for ``sin``; the trigonometric factor therefore depends only on
        ``|alpha| mod 4``.
        """
        be = ring.backend
        D = ring.nvars
        K = ring.degree
        out = ring.constant(self.constant)
        degrees = ring.degrees
        for m in self.modes:
            if m.cos == 0 and m.sin == 0:
                continue
            omega = [2 * be.pi * be.real(k) / be.real(P) for k, P in zip(m.wave, periods)]
            phase = sum(w * be.real(b) for w, b in zip(omega, base))
            cph, sph = be.cos(phase), be.sin(phase)
            A = m.cos * cph + m.sin * sph
            B = -m.cos * sph + m.sin * cph
            cycle = [A, B, -A, -B]
            trig = np.empty(ring.shape, dtype=object)
            for p in range(4):
                trig[degrees % 4 == p] = cycle[p]
            factor = None
            for mu in range(D):
                col = [omega[mu] ** j / math.factorial(j) for j in range(K + 1)]
                shape = [1] * D
                shape[mu] = K + 1
                col = np.asarray(col, dtype=object).reshape(shape)
                factor = col if factor is None else factor * col
            term = trig * factor
            if be.dtype is not object:
                term = term.astype(np.complex128)
            term[~ring.mask] = 0
            out = out + term
        return out


def _as_field(spec) -> FourierField:
    if isinstance(spec, FourierField):
        return spec
    if isinstance(spec, (int, float)):
        return FourierField(float(spec))
    raise TypeError(f"cannot interpret {spec!r} as a Fourier field")


# ---------------------------------------------------------------------------
# ADM data


@dataclass(frozen=True)
class AdmField:
    """Foliation data ``(N, N^a, hat g_ab, V)`` on a torus of given periods."""

    dim_space: int
    periods: tuple[float, ...]
    lapse: FourierField
    shift: tuple[FourierField, ...]
    spatial_metric: tuple[tuple[FourierField, ...], ...]
    potential: FourierField = field(default_factory=FourierField)

    def __post_init__(self):
        d = self.dim_space
        if d < 1:
            raise InvalidGeometryError("dim_space must be >= 1")
        if len(self.periods) != d + 1 or any(p <= 0 for p in self.periods):
            raise InvalidGeometryError("need d+1 positive periods")
        if len(self.shift) != d:
            raise InvalidGeometryError("shift must have d components")
        if len(self.spatial_metric) != d or any(len(r) != d for r in self.spatial_metric):
            raise InvalidGeometryError("spatial metric must be d x d")
        for a in range(d):
            for b in range(d):
                if self.spatial_metric[a][b] != self.spatial_metric[b][a]:
                    raise InvalidGeometryError("spatial metric must be symmetric")
        for f in self.fields():
            for m in f.modes:
                if len(m.wave) != d + 1:
                    raise InvalidGeometryError("wave vectors must have d+1 components")

    @property
    def dim(self) -> int:
        return self.dim_space + 1

    def fields(self):
        yield self.lapse
        yield from self.shift
        for row in self.spatial_metric:
            yield from row
        yield self.potential

    @property
    def is_flat(self) -> bool:
        """All fields constant (hence flat metric and constant potential)."""
        return all(f.is_constant for f in self.fields())

    def max_wave(self) -> np.ndarray:
        k = np.zeros(self.dim, dtype=int)
        for f in self.fields():
            k = np.maximum(k, f.max_wave(self.dim))
        return k

    def with_potential(self, potential) -> "AdmField":
        return AdmField(self.dim_space, self.periods, self.lapse, self.shift,
                        self.spatial_metric, _as_field(potential))

    def probe_grid(self, oversample: int = 4) -> np.ndarray:
        k = self.max_wave()
        sizes = [max(8, oversample * (2 * int(kk) + 1)) for kk in k]
        axes = [np.arange(n) * P / n for n, P in zip(sizes, self.periods)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def validate(self, margin: float = 1e-6, oversample: int = 4) -> None:
        """Check positivity of ``N``, ``hat g`` and ``V`` on a dense probe grid."""
        pts = self.probe_grid(oversample)
        lapse = self.lapse.evaluate(pts, self.periods)
        if lapse.min() <= margin:
            raise InvalidGeometryError(f"lapse min {lapse.min():.3g} <= margin {margin:g}")
        ghat = self.spatial_metric_values(pts)
        eig = np.linalg.eigvalsh(ghat)
        if eig.min() <= margin:
            raise InvalidGeometryError(f"spatial metric eigenvalue {eig.min():.3g} <= margin")
        pot = self.potential.evaluate(pts, self.periods)
        if pot.min() < -1e-14:
            raise InvalidGeometryError(f"potential takes negative value {pot.min():.3g}")

    # vectorized pointwise values ------------------------------------------
    def spatial_metric_values(self, points) -> np.ndarray:
        d = self.dim_space
        pts = np.asarray(points, dtype=float)
        out = np.empty(pts.shape[:-1] + (d, d))
        for a in range(d):
            for b in range(a, d):
                v = self.spatial_metric[a][b].evaluate(pts, self.periods)
                out[..., a, b] = v
                out[..., b, a] = v
        return out

    def shift_values(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.stack([f.evaluate(pts, self.periods) for f in self.shift], axis=-1)

    def density_values(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.lapse.evaluate(pts, self.periods) * np.sqrt(
            np.linalg.det(self.spatial_metric_values(pts)))

    def potential_values(self, points) -> np.ndarray:
        return self.potential.evaluate(points, self.periods)

    def inverse_metric_values(self, points, theta) -> np.ndarray:
        """``g_theta^{mu nu}`` at points; ``theta='plus'|'minus'`` give ``g_+``/``g_-``."""
        pts = np.asarray(points, dtype=float)
        lapse = self.lapse.evaluate(pts, self.periods)
        shift = self.shift_values(pts)
        ginv = np.linalg.inv(self.spatial_metric_values(pts))
        if theta == "plus":
            phase = -1.0
        elif theta == "minus":
            phase = 1.0
        else:
            phase = cmath.exp(2j * theta)
        dtype = float if isinstance(phase, float) else complex
        D = self.dim
        out = np.empty(pts.shape[:-1] + (D, D), dtype=dtype)
        inv_n2 = 1.0 / lapse**2
        out[..., 0, 0] = -phase * inv_n2
        out[..., 0, 1:] = phase * shift * inv_n2[..., None]
        out[..., 1:, 0] = out[..., 0, 1:]
        out[..., 1:, 1:] = ginv - phase * shift[..., :, None] * shift[..., None, :] * inv_n2[..., None, None]
        return out


# ---------------------------------------------------------------------------
# pointwise metric


@dataclass(frozen=True)
class ThetaMetric:
    theta: float
    components: np.ndarray
    inverse: np.ndarray
    density: float


def _check_theta(theta) -> float:
    theta = float(theta)
    if not (0 < theta <= math.pi):
        raise ContractViolation(f"theta={theta} outside (0, pi]")
    return theta


def build_theta_metric(adm: AdmField, theta: float, y) -> ThetaMetric:
    """Complex metric ``g^theta_{mu nu}``, inverse and density at ``y``."""
    theta = _check_theta(theta)
    y = np.asarray(y, dtype=float)
    lapse = float(adm.lapse.evaluate(y, adm.periods))
    ghat = adm.spatial_metric_values(y)
    if lapse <= 0:
        raise InvalidGeometryError(f"non-positive lapse {lapse} at {y}")
    if np.linalg.eigvalsh(ghat).min() <= 0:
        raise InvalidGeometryError(f"spatial metric not positive definite at {y}")
    shift = adm.shift_values(y)
    D = adm.dim
    g = np.empty((D, D), dtype=complex)
    low_shift = ghat @ shift
    g[0, 0] = -cmath.exp(-2j * theta) * lapse**2 + shift @ low_shift
    g[0, 1:] = low_shift
    g[1:, 0] = low_shift
    g[1:, 1:] = ghat
    inv = adm.inverse_metric_values(y, theta)
    density = lapse * math.sqrt(np.linalg.det(ghat))
    return ThetaMetric(theta, g, inv, density)


def combination_identity_check(adm: AdmField, theta: float, y) -> float:
    """``max |i e^{-i theta} g_theta - (sin theta g_+ + i cos theta g_-)|``."""
    theta = _check_theta(theta)
    y = np.asarray(y, dtype=float)
    lhs = 1j * cmath.exp(-1j * theta) * adm.inverse_metric_values(y, theta)
    rhs = math.sin(theta) * adm.inverse_metric_values(y, "plus") + 1j * math.cos(
        theta) * adm.inverse_metric_values(y, "minus")
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# jets


@dataclass
class JetPoint:
    """Taylor coefficients of every ADM field about ``base``.

    Arrays live in ``ring`` (``D`` variables, total degree ``order``);
    ``derivative`` converts back to partial derivatives.
    """

    base: tuple
    order: int
    ring: Ring
    lapse: np.ndarray
    shift: list
    spatial_metric: list
    potential: np.ndarray
    periods: tuple = ()

    def derivative(self, name: str, alpha, component=()) -> complex:
        arr = getattr(self, name)
        for c in component:
            arr = arr[c]
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise ContractViolation(f"derivative of order {sum(alpha)} > jet order {self.order}")
        return arr[alpha] * alpha_factorial(alpha)


def adm_jets(adm: AdmField, y, order: int, backend=FLOAT) -> JetPoint:
    """Exact jets of all ADM fields at ``y`` up to ``order``."""
    ring = Ring(adm.dim, order, backend)
    base = tuple(float(v) if backend is FLOAT else backend.real(v) for v in y)
    P = adm.periods
    d = adm.dim_space
    return JetPoint(
        base=base,
        order=order,
        ring=ring,
        lapse=adm.lapse.taylor(base, P, ring),
        shift=[adm.shift[a].taylor(base, P, ring) for a in range(d)],
        spatial_metric=[[adm.spatial_metric[a][b].taylor(base, P, ring) for b in range(d)]
                        for a in range(d)],
        potential=adm.potential.taylor(base, P, ring),
        periods=P,
    )


@dataclass
class MetricJets:
    """Taylor jets of the rotated metric data about one point.

    ``lower``/``upper`` are nested lists of polynomials; ``gamma`` is accurate
    to one degree less than the ring.  ``phase`` is ``exp(2 i theta)``
    (``-1`` for ``g_+``, ``1`` for ``g_-``).
    """

    ring: Ring
    theta: float
    base: tuple
    lower: list
    upper: list
    density: np.ndarray
    gamma: list
    potential: np.ndarray

    def at_base(self, name: str):
        arr = getattr(self, name)
        zero = (0,) * self.ring.nvars
        if isinstance(arr, list):
            return np.array(_map_nested(lambda a: a[zero], arr), dtype=object)
        return arr[zero]


def _map_nested(fn, obj):
    if isinstance(obj, list):
        return [_map_nested(fn, o) for o in obj]
    return fn(obj)


def _matrix_inverse_series(ring: Ring, mat):
    d = len(mat)
    if d == 1:
        return [[ring.reciprocal(mat[0][0])]]
    zero = (0,) * ring.nvars
    be = ring.backend
    const = np.array([[complex(mat[a][b][zero]) for b in range(d)] for a in range(d)])
    inv0 = np.linalg.inv(const)
    X = [[ring.constant(inv0[a, b]) for b in range(d)] for a in range(d)]
    iterations = int(math.ceil(math.log2(ring.degree + 1))) + (6 if be.dtype is object else 2)
    for _ in range(iterations):
        GX = [[sum((ring.mul(mat[a][c], X[c][b]) for c in range(d)), ring.zeros())
               for b in range(d)] for a in range(d)]
        R = [[(2 if a == b else 0) * ring.constant(1) - GX[a][b] for b in range(d)]
             for a in range(d)]
        X = [[sum((ring.mul(X[a][c], R[c][b]) for c in range(d)), ring.zeros())
              for b in range(d)] for a in range(d)]
    return X


def _determinant_series(ring: Ring, mat):
    d = len(mat)
    total = ring.zeros()
    for perm in itertools.permutations(range(d)):
        sign = _perm_sign(perm)
        term = ring.constant(sign)
        for a in range(d):
            term = ring.mul(term, mat[a][perm[a]])
        total = total + term
    return total


def _perm_sign(perm) -> int:
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def theta_phase(theta, backend=FLOAT):
    """``exp(2 i theta)``; markers ``'plus'``/``'minus'`` select ``g_+``/``g_-``."""
    if theta == "plus":
        return backend.scalar(-1)
    if theta == "minus":
        return backend.scalar(1)
    return backend.exp(2j * backend.real(theta))


def metric_jets(jet: JetPoint, theta) -> MetricJets:
    """Jets of ``g^theta_{mu nu}``, ``g_theta^{mu nu}``, ``|g|^{1/2}``, ``gamma^mu``, ``V``."""
    ring = jet.ring
    d = len(jet.shift)
    D = d + 1
    e2 = theta_phase(theta, ring.backend)
    em2 = 1 / e2
    mul = ring.mul
    N = jet.lapse
    if jet.lapse[(0,) * D].real <= 0:
        raise InvalidGeometryError("non-positive lapse at jet base")
    Nsq = mul(N, N)
    inv_nsq = ring.reciprocal(Nsq)
    gh = jet.spatial_metric
    sh = jet.shift
    gh_inv = _matrix_inverse_series(ring, gh)
    low_shift = [sum((mul(gh[a][b], sh[b]) for b in range(d)), ring.zeros()) for a in range(d)]
    lower = [[None] * D for _ in range(D)]
    lower[0][0] = -em2 * Nsq + sum((mul(low_shift[a], sh[a]) for a in range(d)), ring.zeros())
    for a in range(d):
        lower[0][a + 1] = lower[a + 1][0] = low_shift[a]
        for b in range(d):
            lower[a + 1][b + 1] = gh[a][b]
    upper = [[None] * D for _ in range(D)]
    upper[0][0] = -e2 * inv_nsq
    for a in range(d):
        upper[0][a + 1] = upper[a + 1][0] = e2 * mul(sh[a], inv_nsq)
        for b in range(d):
            upper[a + 1][b + 1] = gh_inv[a][b] - e2 * mul(mul(sh[a], sh[b]), inv_nsq)
    density = mul(N, ring.sqrt(_determinant_series(ring, gh)))
    inv_density = ring.reciprocal(density)
    gamma = []
    for mu in range(D):
        div = ring.zeros()
        for nu in range(D):
            div = div + ring.deriv(mul(density, upper[nu][mu]), nu)
        gamma.append(mul(inv_density, div))
    theta_val = theta if isinstance(theta, str) else float(theta)
    return MetricJets(ring, theta_val, jet.base, lower, upper, density, gamma, jet.potential)


def gamma_vector(adm: AdmField, theta: float, jet: JetPoint) -> np.ndarray:
    """``gamma^mu_theta`` at the jet base, exact from jets of order >= 1."""
    if jet.order < 1:
        raise ContractViolation("gamma_vector needs jets of order >= 1")
    mj = metric_jets(jet, theta)
    zero = (0,) * adm.dim
    return np.array([complex(g[zero]) for g in mj.gamma])


def laplacian_from_jets(mj: MetricJets, u) -> complex:
    """``(nabla^2 u)(base)`` for a test-field polynomial ``u`` in ``mj.ring``."""
    ring = mj.ring
    D = ring.nvars
    zero = (0,) * D
    total = 0
    for mu in range(D):
        du = ring.deriv(u, mu)
        total += mj.gamma[mu][zero] * du[zero]
        for nu in range(D):
            total += mj.upper[mu][nu][zero] * ring.deriv(du, nu)[zero]
    return total


def apply_delta_theta(adm: AdmField, theta: float, u, y, route: str = "adm") -> complex:
    """``(Delta_theta u)(y)`` for a test field given by Taylor coefficients ``u``.

    ``route='adm'`` evaluates ``(-sin theta D_+ - i cos theta D_-) u`` with
    ``D_pm = -nabla^2_pm + V``; ``route='theta'`` evaluates
    ``i e^{-i theta}(nabla^2_theta - V) u``.  The two must agree.
    """
    theta = _check_theta(theta)
    u = np.asarray(u)
    order = u.shape[0] - 1
    if order < 2:
        raise ContractViolation("test-field jet must have order >= 2")
    jet = adm_jets(adm, y, order)
    u = jet.ring.embed(u.astype(complex))
    zero = (0,) * adm.dim
    V = jet.potential[zero]
    u0 = u[zero]
    if route == "adm":
        lap_p = laplacian_from_jets(metric_jets(jet, "plus"), u)
        lap_m = laplacian_from_jets(metric_jets(jet, "minus"), u)
        d_plus = -lap_p + V * u0
        d_minus = -lap_m + V * u0
        return complex(-math.sin(theta) * d_plus - 1j * math.cos(theta) * d_minus)
    if route == "theta":
        lap = laplacian_from_jets(metric_jets(jet, theta), u)
        return complex(1j * cmath.exp(-1j * theta) * (lap - V * u0))
    raise ValueError(f"unknown route {route!r}")
