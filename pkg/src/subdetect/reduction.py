"""Reduction from planted clique to submatrix detection.

The continuous map g replaces every bit of A0 by a draw from f1 (edge) or
f0 (no edge), then folds the N2×N2 result onto p×p by averaging the ℓ²
aliased positions. The discretized map ğ draws from the dyadic
approximations Q0, Q1 with exactly T coin flips per entry and carries out
the averaging in integer arithmetic, so its output is a function of the
coin stream alone.
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import erfc

from .errors import CoinsExhausted, ParameterError, QuantizationOverflow, ReductionWarning, SamplingError
from .model import MAX_SCALE, DyadicReal, QuantizedMatrix
from .utils import make_rng, parallel_map

REJECTION_CAP = 10_000
TABLE_ATOMS_MAX = 2**25
_ASYMPTOTIC_FROM = 40.0
_COIN_KEY = 0xC017


def norm_sf(x):
    """Φ̄(x) by the complementary error function, asymptotic series beyond 40."""
    x = np.asarray(x, dtype=np.float64)
    direct = 0.5 * erfc(x / math.sqrt(2.0))
    big = x > _ASYMPTOTIC_FROM
    if not np.any(big):
        return direct if direct.ndim else float(direct)
    xb = np.where(big, x, _ASYMPTOTIC_FROM)
    inv2 = 1.0 / (xb * xb)
    series = (1.0 - inv2 + 3.0 * inv2**2 - 15.0 * inv2**3) * np.exp(-0.5 * xb * xb) / (xb * math.sqrt(2 * math.pi))
    out = np.where(big, series, direct)
    return out if out.ndim else float(out)


def norm_cdf(x):
    return norm_sf(-np.asarray(x, dtype=np.float64))


def norm_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def normal_interval(a, b):
    """Φ(b) - Φ(a), computed on the tail that keeps precision."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.where(a > 0, norm_sf(a) - norm_sf(b), norm_cdf(b) - norm_cdf(a))


@dataclass(frozen=True)
class TruncatedPairSpec:
    """f1 = c1 φ(x-μ) on [-M, M] and f0 = 2 c0 φ(x) - f1 on [-M, M]."""

    M: float
    mu: float
    c0: float
    c1: float

    def f0(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = np.abs(x) <= self.M
        return np.where(inside, 2 * self.c0 * norm_pdf(x) - self.c1 * norm_pdf(x - self.mu), 0.0)

    def f1(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(np.abs(x) <= self.M, self.c1 * norm_pdf(x - self.mu), 0.0)

    def mixture(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(np.abs(x) <= self.M, self.c0 * norm_pdf(x), 0.0)

    def mass(self, which, a, b):
        """Probability that F_which puts on [a, b] ∩ [-M, M]."""
        a = np.clip(a, -self.M, self.M)
        b = np.clip(b, -self.M, self.M)
        shifted = self.c1 * normal_interval(a - self.mu, b - self.mu)
        if which == 1:
            return shifted
        if which == 0:
            return 2 * self.c0 * normal_interval(a, b) - shifted
        raise ParameterError(f"distribution index must be 0 or 1, got {which}")

    def cdf(self, which, x):
        return np.clip(self.mass(which, -self.M, x), 0.0, 1.0)


def make_pair(M, mu):
    if M < 3:
        raise ParameterError(f"truncation level must be at least 3, got M = {M}")
    if not 0 < mu <= 1 / (2 * M) * (1 + 1e-12):
        raise ParameterError(f"mean shift must lie in (0, 1/(2M)], got mu = {mu}")
    c0 = 1.0 / (1.0 - 2.0 * norm_sf(M))
    c1 = 1.0 / (1.0 - norm_sf(M - mu) - norm_sf(M + mu))
    return TruncatedPairSpec(float(M), float(mu), float(c0), float(c1))


def density_f0(x, spec):
    return spec.f0(x)


def density_f1(x, spec):
    return spec.f1(x)


def truncation_tv(spec):
    """Closed-form TV of the truncated laws to their normals, with the exponential bounds."""
    M, mu = spec.M, spec.mu
    return {
        "tv_mixture": 2 * norm_sf(M),
        "bound_mixture": math.exp(-M * M / 2),
        "tv_f1": norm_sf(M - mu) + norm_sf(M + mu),
        "bound_f1": math.exp((1 - M * M) / 2),
    }


def _rejection(draw, accept, rng, size):
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    pending = np.arange(n)
    for _ in range(REJECTION_CAP):
        if not len(pending):
            break
        z = draw(rng, len(pending))
        ok = accept(z, rng)
        out[pending[ok]] = z[ok]
        pending = pending[~ok]
    else:
        if len(pending):
            raise SamplingError(f"rejection sampler exceeded {REJECTION_CAP} rounds")
    return float(out[0]) if size is None else out.reshape(size)


def sample_f0(spec, rng, size=None):
    """Propose N(0, 1) restricted to [-M, M], accept with f0 / (2 c0 φ)."""
    ratio = spec.c1 / (2 * spec.c0)

    def accept(z, rng):
        u = rng.random(len(z))
        keep = 1.0 - ratio * np.exp(z * spec.mu - 0.5 * spec.mu**2)
        return (np.abs(z) <= spec.M) & (u < keep)

    return _rejection(lambda rng, n: rng.standard_normal(n), accept, rng, size)


def sample_f1(spec, rng, size=None):
    return _rejection(
        lambda rng, n: spec.mu + rng.standard_normal(n),
        lambda z, rng: np.abs(z) <= spec.M,
        rng,
        size,
    )


@dataclass(frozen=True)
class ReductionParams:
    p: int
    k: int
    lam: float
    kappa: int
    ell: int
    N: int
    N2: int
    M: float
    mu: float
    t: int
    w: int
    T: int

    def pair(self):
        return make_pair(self.M, self.mu)

    @property
    def w_condition(self):
        return self.w >= self.t + 6 * math.log2(self.N)

    @property
    def signal(self):
        """2μp/N, the elevated mean on U1×U2 of the reduced matrix."""
        return 2 * self.mu * self.p / self.N

    def to_dict(self):
        return {
            "p": self.p, "k": self.k, "lambda": self.lam, "kappa": self.kappa,
            "ell": self.ell, "N": self.N, "N2": self.N2, "M": self.M, "mu": self.mu,
            "t": self.t, "w": self.w, "T": self.T, "w_condition": self.w_condition,
        }


def _ell_cost(p, ell):
    n = 2 * p * ell
    return n * math.sqrt(6 * math.log(n))


def largest_ell(p, lam):
    """Largest ℓ >= 1 with 2pℓ sqrt(6 log 2pℓ) <= p/λ, or 0 if none."""
    if lam <= 0:
        raise ParameterError("lambda must be positive to size the reduction")
    target = p / lam
    if _ell_cost(p, 1) > target:
        return 0
    lo, hi = 1, 2
    while _ell_cost(p, hi) <= target:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _ell_cost(p, mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def default_t(p):
    return 4 * math.ceil(math.log2(p))


def choose_params(p, k, lam, t=None, w=None, strict=True):
    """Parameters of the reduction for target (p, k, λ).

    With strict=False the conditions p >= 40k and the cap on λ only warn,
    which admits the small instances used to check the machinery.
    """
    if k < 1 or p < 3:
        raise ParameterError(f"need k >= 1 and p >= 3, got p = {p}, k = {k}")
    lam_cap = 1 / (2 * math.sqrt(6 * math.log(2 * p)))
    problems = []
    if p < 40 * k:
        problems.append(f"p = {p} violates p >= 40k = {40 * k}")
    if lam > lam_cap:
        problems.append(f"lambda = {lam} violates lambda <= 1/(2 sqrt(6 log 2p)) = {lam_cap:.6g}")
    if problems and strict:
        raise ParameterError("; ".join(problems))
    for problem in problems:
        warnings.warn(problem, ReductionWarning, stacklevel=2)

    ell = largest_ell(p, lam)
    if ell < 1:
        raise ParameterError(
            f"no l >= 1 satisfies N sqrt(6 log N) <= p/lambda; lambda = {lam} is too large "
            f"(need lambda <= 1/(2 sqrt(6 log 2p)) = {lam_cap:.6g})"
        )
    N = 2 * p * ell
    M = math.sqrt(6 * math.log(N))
    mu = 1 / (2 * M)
    t = default_t(p) if t is None else int(t)
    if t < 0 or t > MAX_SCALE:
        raise QuantizationOverflow(f"t = {t} outside [0, {MAX_SCALE}]")
    w_needed = math.ceil(t + 6 * math.log2(N))
    if w is None:
        w = max(16 * math.ceil(math.log2(p)), w_needed)
    elif w < w_needed:
        warnings.warn(f"w = {w} is below t + 6 log2 N = {w_needed}", ReductionWarning, stacklevel=2)
    T = math.ceil(math.log2(M)) + int(w) + math.ceil(3 * math.log2(N))
    return ReductionParams(p, k, float(lam), 20 * k, ell, N, p * ell, M, mu, t, int(w), T)


def gaussianize(A0, B0, B1):
    A0 = np.asarray(A0)
    if not (A0.shape == np.shape(B0) == np.shape(B1)) or A0.ndim != 2:
        raise ParameterError(f"shape mismatch: A0 {A0.shape}, B0 {np.shape(B0)}, B1 {np.shape(B1)}")
    return np.where(A0.astype(bool), B1, B0)


def alias_sums(B, p, ell):
    """Σ of the ℓ² positions of B that fold onto each (a, b)."""
    B = np.asarray(B)
    if B.shape != (p * ell, p * ell):
        raise ParameterError(f"expected a {p * ell}×{p * ell} matrix, got shape {B.shape}")
    return B.reshape(ell, p, ell, p).sum(axis=(0, 2))


def partition_average(B, p, ell):
    return alias_sums(B, p, ell) / ell


def reduce_continuous(A, spec, params, rng):
    if A.N != params.N:
        raise ParameterError(f"graph has N = {A.N}, parameters need N = {params.N}")
    spec = spec or params.pair()
    n2 = params.N2
    B0 = sample_f0(spec, rng, (n2, n2))
    B1 = sample_f1(spec, rng, (n2, n2))
    return partition_average(gaussianize(A.lower_left(), B0, B1), params.p, params.ell)


@dataclass
class CoinLedger:
    phases: dict = field(default_factory=dict)
    operations: int = None

    @property
    def bits_consumed(self):
        return sum(self.phases.values())

    def charge(self, phase, bits):
        self.phases[phase] = self.phases.get(phase, 0) + bits

    def to_dict(self):
        out = {"bits_consumed": self.bits_consumed, "phases": dict(self.phases)}
        if self.operations is not None:
            out["operations"] = self.operations
        return out


class CoinStream:
    """Fair bits from a Philox stream; bit r*T .. (r+1)*T - 1 belongs to draw r."""

    def __init__(self, bits):
        self.bits = np.asarray(bits, dtype=np.uint8)
        self.position = 0

    @classmethod
    def from_seed(cls, seed, nbits, *key):
        return cls(make_rng(seed, _COIN_KEY, *key).integers(0, 2, size=nbits, dtype=np.uint8))

    @property
    def remaining(self):
        return len(self.bits) - self.position

    def take(self, nbits):
        if nbits > self.remaining:
            raise CoinsExhausted(f"need {nbits} coin flips, only {self.remaining} left")
        out = self.bits[self.position:self.position + nbits]
        self.position += nbits
        return out

    def uniforms(self, count, T):
        """count integers uniform on {1, ..., 2^T}, each from T consecutive bits."""
        bits = self.take(count * T).reshape(count, T)
        if T <= 62:
            shifts = np.arange(T - 1, -1, -1, dtype=np.uint64)
            return (bits.astype(np.uint64) << shifts).sum(axis=1).astype(np.int64) + 1
        out = np.empty(count, dtype=object)
        for r in range(count):
            out[r] = int("".join("1" if b else "0" for b in bits[r]), 2) + 1
        return out


class DyadicDistribution:
    """Q0 or Q1: atoms on the w-bit grid of [-M, M), masses in multiples of 2^-T.

    Atom j (0-based) is the left endpoint (lo + j) 2^-w of its cell. In table
    mode the masses are floor(p_j 2^T) with the first atom taking the
    remainder; in lazy mode the cumulative values floor(F(right edge) 2^T)
    are evaluated on demand.
    """

    def __init__(self, which, spec, w, T, mode="auto", table_atoms_max=TABLE_ATOMS_MAX):
        self.which, self.spec, self.w, self.T = which, spec, w, T
        self.lo = math.floor(math.ldexp(-spec.M, w))
        self.hi = math.ceil(math.ldexp(spec.M, w))
        self.n_atoms = self.hi - self.lo
        if mode == "auto":
            mode = "table" if self.n_atoms <= table_atoms_max and T <= 62 else "lazy"
        if mode == "table" and (T > 62 or self.n_atoms > table_atoms_max):
            raise ParameterError(f"table mode needs T <= 62 and at most {table_atoms_max} atoms")
        if mode not in ("table", "lazy"):
            raise ParameterError(f"unknown mode {mode!r}")
        self.mode = mode
        self.cell_masses = None
        self.cumulative = None
        if mode == "table":
            self._build_table()

    def _edges(self, j):
        if np.ndim(j) == 0:
            return math.ldexp(float(self.lo + int(j)), -self.w)
        return np.ldexp((self.lo + np.asarray(j)).astype(np.float64), -self.w)

    def _build_table(self):
        edges = self._edges(np.arange(self.n_atoms + 1))
        p = np.clip(self.spec.mass(self.which, edges[:-1], edges[1:]), 0.0, None)
        self.cell_masses = p
        q = np.floor(np.ldexp(p, self.T)).astype(np.int64)
        q[0] = (1 << self.T) - int(q[1:].sum())
        if q[0] < 0:
            # rounding of p_j pushed the floors past 1; take the excess from the heaviest atom
            heaviest = int(np.argmax(q))
            q[heaviest] += q[0]
            q[0] = 0
        self.masses = q
        self.cumulative = np.cumsum(q)

    def cdf_mantissa(self, j):
        """Cumulative mass of atoms 0..j, as an integer multiple of 2^-T."""
        if not 0 <= j < self.n_atoms:
            raise ParameterError(f"atom index {j} outside [0, {self.n_atoms})")
        if self.mode == "table":
            return int(self.cumulative[j])
        return self._cdf_mantissas([j])[0]

    def _cdf_mantissas(self, js):
        # float64 edges: once |lo + j| passes 2^53 a run of atoms shares one edge, and the
        # run's whole mass goes to its first atom
        edges = np.array([math.ldexp(float(self.lo + j + 1), -self.w) for j in js])
        F = np.atleast_1d(self.spec.cdf(self.which, edges))
        last = self.n_atoms - 1
        return [1 << self.T if j == last else math.floor(math.ldexp(float(f), self.T)) for j, f in zip(js, F)]

    def analytic_cumulative(self):
        """All lazy-mode cumulative mantissas at once (T <= 62, small grids only)."""
        F = self.spec.cdf(self.which, self._edges(np.arange(1, self.n_atoms + 1)))
        C = np.floor(np.ldexp(F, self.T)).astype(np.int64)
        C[-1] = 1 << self.T
        return C

    def atom(self, j):
        return DyadicReal(self.lo + int(j), self.w)

    def index_of(self, U):
        """min{j : CDF(j) >= U 2^-T}, vectorized over U."""
        if self.mode == "table":
            return np.searchsorted(self.cumulative, np.asarray(U, dtype=np.int64), side="left")
        return self._lazy_indices([int(u) for u in np.atleast_1d(U)])

    def _lazy_indices(self, us):
        """Bisection for all U at once, in exact integers; object dtype past int64."""
        lo = [0] * len(us)
        hi = [self.n_atoms - 1] * len(us)
        while True:
            active = [r for r in range(len(us)) if lo[r] < hi[r]]
            if not active:
                break
            mids = [(lo[r] + hi[r]) // 2 for r in active]
            for r, mid, c in zip(active, mids, self._cdf_mantissas(mids)):
                if c >= us[r]:
                    hi[r] = mid
                else:
                    lo[r] = mid + 1
        return np.array(lo, dtype=np.int64 if self.n_atoms < 2**63 else object)

    def atom_mantissas(self, U):
        idx = self.index_of(U)
        if self.lo + self.n_atoms < 2**62 and -self.lo < 2**62:
            return idx.astype(np.int64) + self.lo
        return np.array([self.lo + int(j) for j in idx], dtype=object)


# a table at the atom limit holds hundreds of MB; keep only the Q0, Q1 pair in use
@lru_cache(maxsize=2)
def dyadic_distribution(which, spec, w, T, mode="auto", table_atoms_max=TABLE_ATOMS_MAX):
    return DyadicDistribution(which, spec, w, T, mode, table_atoms_max)


def dyadic_cdf(which, j, spec, w, T, mode="auto", table_atoms_max=TABLE_ATOMS_MAX):
    """T-bit cumulative value of atom j (1-based) of Q_which."""
    dist = dyadic_distribution(which, spec, w, T, mode, table_atoms_max)
    return DyadicReal(dist.cdf_mantissa(j - 1), T)


def sample_q(dist, coins, ledger=None, phase=None):
    """One atom of dist from exactly T coin flips."""
    U = coins.uniforms(1, dist.T)
    if ledger is not None:
        ledger.charge(phase or f"Q{dist.which}", dist.T)
    return dist.atom(int(dist.index_of(U)[0]))


def sample_q_mantissas(dist, coins, count, ledger=None, phase=None, threads=1):
    U = coins.uniforms(count, dist.T)
    if ledger is not None:
        ledger.charge(phase or f"Q{dist.which}", count * dist.T)
    if threads <= 1 or count < 2:
        return dist.atom_mantissas(U)
    parts = parallel_map(dist.atom_mantissas, np.array_split(U, threads), threads)
    return np.concatenate(parts)


def _fits_int64(params):
    bits = math.ceil(math.log2(params.M + 1)) + params.w + 2 * math.ceil(math.log2(params.ell + 1)) + 2
    bits += max(0, params.t - params.w)
    return bits < 62


def reduce_discrete(A, params, coins, ledger=None, mode="auto", threads=1, table_atoms_max=TABLE_ATOMS_MAX):
    """[X̆]_t from A and the coin stream; B̆0 uses the first N2²T bits, B̆1 the next."""
    if A.N != params.N:
        raise ParameterError(f"graph has N = {A.N}, parameters need N = {params.N}")
    spec = params.pair()
    n2 = params.N2
    q0 = dyadic_distribution(0, spec, params.w, params.T, mode, table_atoms_max)
    q1 = dyadic_distribution(1, spec, params.w, params.T, mode, table_atoms_max)
    ledger = ledger if ledger is not None else CoinLedger()
    b0 = sample_q_mantissas(q0, coins, n2 * n2, ledger, "B0", threads).reshape(n2, n2)
    b1 = sample_q_mantissas(q1, coins, n2 * n2, ledger, "B1", threads).reshape(n2, n2)
    if _fits_int64(params):
        b0, b1 = b0.astype(np.int64), b1.astype(np.int64)
    else:
        b0, b1 = b0.astype(object), b1.astype(object)

    # sums of ℓ² mantissas at scale w, divided by ℓ and floored to scale t exactly
    S = alias_sums(gaussianize(A.lower_left(), b0, b1), params.p, params.ell)
    if params.w >= params.t:
        out = S // (params.ell * (1 << (params.w - params.t)))
    else:
        out = (S * (1 << (params.t - params.w))) // params.ell
    out = np.asarray(out)
    if out.dtype == object and max(abs(int(v)) for v in out.flat) >= 2**63:
        raise QuantizationOverflow(f"reduced entries do not fit 64-bit mantissas at t = {params.t}")
    return QuantizedMatrix(params.t, out.astype(np.int64))


def bit_budget(params):
    """Forecast of the coin flips and binary operations of reduce_discrete."""
    per_phase = params.N2 * params.N2 * params.T
    log_m = math.ceil(math.log2(params.M))
    operations = math.ceil(params.M) * 2**params.w * params.T + params.N**2 * (log_m + params.w + params.t)
    return CoinLedger({"B0": per_phase, "B1": per_phase}, operations)


def _tail_terms(p, k):
    return 40 * k * (math.e / 4) ** (5 * k) + 2 * k * math.exp(-4 * k * math.log(p / (20 * k)))


def theorem_beta(p, k, discrete=False):
    """β = β0 + β1 added to a test's error by composing it with the reduction."""
    extra = 4 / p if discrete else 0.0
    beta0 = 1 / p + extra
    beta1 = 1 / p + extra + _tail_terms(p, k)
    return {"beta0": beta0, "beta1": beta1, "beta": beta0 + beta1}
