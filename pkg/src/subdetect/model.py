"""Observation models of the submatrix detection problem.

The Gaussian experiment observes X = θ + Z with Z i.i.d. N(0, 1); the
discretized experiment observes [X]_t, every entry floored onto the grid
2^-t ℤ. Index sets (U, V) are 1-based labels in [p].
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ParameterError, QuantizationOverflow
from .utils import make_rng

MANTISSA_BITS = 64
MAX_SCALE = 56
_MANTISSA_LIMIT = 2 ** (MANTISSA_BITS - 1)


@dataclass(frozen=True, eq=False)
class DyadicReal:
    """The exact value mantissa * 2^-scale."""

    mantissa: int
    scale: int

    def __post_init__(self):
        if self.scale < 0:
            raise ParameterError(f"scale must be nonnegative, got {self.scale}")

    @property
    def value(self):
        return Fraction(self.mantissa, 2**self.scale)

    def __float__(self):
        return math.ldexp(self.mantissa, -self.scale)

    def rescale(self, t):
        """Floor onto the grid 2^-t ℤ (exact for any t)."""
        if t >= self.scale:
            return DyadicReal(self.mantissa << (t - self.scale), t)
        return DyadicReal(self.mantissa >> (self.scale - t), t)

    def __eq__(self, other):
        if not isinstance(other, DyadicReal):
            return NotImplemented
        return self.value == other.value

    def __lt__(self, other):
        return self.value < other.value

    def __le__(self, other):
        return self.value <= other.value

    def __hash__(self):
        return hash(self.value)

    def __repr__(self):
        return f"DyadicReal({self.mantissa}, {self.scale}) = {float(self)}"


def _check_scale(t):
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    if t > MAX_SCALE:
        raise QuantizationOverflow(f"t = {t} exceeds the supported scale {MAX_SCALE}")


def quantize(x, t):
    """[x]_t = 2^-t floor(2^t x) as an exact DyadicReal."""
    _check_scale(t)
    if not math.isfinite(x):
        raise QuantizationOverflow(f"cannot quantize {x}")
    try:
        mantissa = math.floor(math.ldexp(x, t))
    except OverflowError as e:
        raise QuantizationOverflow(f"mantissa of {x} at t = {t} overflows {MANTISSA_BITS} bits") from e
    if not -_MANTISSA_LIMIT <= mantissa < _MANTISSA_LIMIT:
        raise QuantizationOverflow(f"mantissa of {x} at t = {t} overflows {MANTISSA_BITS} bits")
    return DyadicReal(mantissa, t)


def quantize_mantissas(x, t):
    """Entrywise floor(2^t x) as int64; ldexp scaling is exact in binary floating point."""
    _check_scale(t)
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise QuantizationOverflow("cannot quantize non-finite entries")
    with np.errstate(over="ignore"):
        scaled = np.floor(np.ldexp(x, t))
    bad = ~np.isfinite(scaled) | (np.abs(scaled) >= float(_MANTISSA_LIMIT))
    if np.any(bad):
        raise QuantizationOverflow(
            f"mantissa of {np.asarray(x)[bad].flat[0]} at t = {t} overflows {MANTISSA_BITS} bits"
        )
    return scaled.astype(np.int64)


@dataclass(frozen=True, eq=False)
class QuantizedMatrix:
    """A p×p matrix of dyadic entries sharing the scale t."""

    t: int
    mantissas: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mantissas)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError(f"expected a square matrix, got shape {m.shape}")
        _check_scale(self.t)

    @property
    def p(self):
        return self.mantissas.shape[0]

    def values(self):
        return np.ldexp(self.mantissas.astype(np.float64), -self.t)

    def entry(self, i, j):
        return DyadicReal(int(self.mantissas[i, j]), self.t)

    def __eq__(self, other):
        if not isinstance(other, QuantizedMatrix):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.mantissas, other.mantissas)


def quantize_matrix(x, t):
    return QuantizedMatrix(t, quantize_mantissas(x, t))


def as_array(X):
    """Float view of a real observation or of a QuantizedMatrix."""
    if isinstance(X, QuantizedMatrix):
        return X.values()
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def _labels(indices, p, name):
    labels = frozenset(int(i) for i in indices)
    bad = [i for i in labels if not 1 <= i <= p]
    if bad:
        raise ParameterError(f"{name} has indices outside [1, {p}]: {sorted(bad)}")
    return labels


@dataclass(frozen=True, eq=False)
class MeanMatrixSpec:
    """θ with θ_ij = values (default lam) on U×V and zero elsewhere."""

    p: int
    U: frozenset
    V: frozenset
    lam: float
    values: np.ndarray = field(default=None)

    @property
    def rows(self):
        return sorted(self.U)

    @property
    def cols(self):
        return sorted(self.V)

    def block(self):
        if self.values is not None:
            return np.asarray(self.values, dtype=np.float64)
        return np.full((len(self.U), len(self.V)), float(self.lam))

    def dense(self):
        theta = np.zeros((self.p, self.p))
        if self.U and self.V:
            rows = np.array(self.rows) - 1
            cols = np.array(self.cols) - 1
            theta[np.ix_(rows, cols)] = self.block()
        return theta

    def in_M(self, k, lam=None):
        lam = self.lam if lam is None else lam
        return len(self.U) >= k and len(self.V) >= k and self._signal_at_least(lam)

    def in_M_tilde(self, k, lam=None):
        small = len(self.U) <= 20 * k and len(self.V) <= 20 * k
        return small and self.in_M(k, lam)

    def in_F(self, k):
        return len(self.U) <= k and len(self.V) <= k

    def _signal_at_least(self, lam):
        if not self.U or not self.V:
            return True
        return bool(np.all(self.block() >= lam))


def make_mean_matrix(p, U, V, lam, values=None):
    if p < 1:
        raise ParameterError(f"p must be positive, got {p}")
    if lam < 0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    U = _labels(U, p, "U")
    V = _labels(V, p, "V")
    if values is not None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(U), len(V)):
            raise ParameterError(f"values must have shape {(len(U), len(V))}, got {values.shape}")
        if np.any(values < lam):
            raise ParameterError(f"values on U×V must be at least lambda = {lam}")
    return MeanMatrixSpec(p, U, V, float(lam), values)


def standard_normal_matrix(p, seed, matrix_id=0):
    """Z with row r drawn from the stream (seed, matrix_id, r)."""
    Z = np.empty((p, p))
    for r in range(p):
        Z[r] = make_rng(seed, matrix_id, r).standard_normal(p)
    return Z


def sample_gaussian(theta, seed, matrix_id=0):
    return theta.dense() + standard_normal_matrix(theta.p, seed, matrix_id)


def sample_discretized(theta, t, seed, matrix_id=0):
    return quantize_matrix(sample_gaussian(theta, seed, matrix_id), t)


def theorem1_min_t(p, eps):
    """Smallest t with t >= (3 + eps) log2 p."""
    if p < 1 or eps <= 0:
        raise ParameterError(f"need p >= 1 and eps > 0, got p = {p}, eps = {eps}")
    return math.ceil((3 + eps) * math.log2(p))


def theorem1_bound(p, t):
    """Deficiency bound 2 p^2 2^(-2t/3) between the Gaussian and discretized experiments."""
    return 2.0 * p * p * 2.0 ** (-2.0 * t / 3.0)
