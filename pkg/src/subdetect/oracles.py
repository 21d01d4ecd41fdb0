"""Independent checks of the bounds claimed by the other modules.

Closed forms and exact computations (quadrature, exact discrete TV, FFT
convolution) are used where they exist; sample-based two-sample tests are
only non-rejection sanity checks, since TV is not estimable from samples.
"""

import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .detectors import apply_test, error_bounds, t_scan
from .errors import BudgetExceeded, ConvergenceError, ParameterError, ReductionWarning
from .estimators import schatten, schatten_ratio_bound
from .plantedclique import event_e_bound, sample_er
from .reduction import (
    CoinLedger,
    CoinStream,
    bit_budget,
    choose_params,
    dyadic_distribution,
    make_pair,
    norm_cdf,
    normal_interval,
    reduce_continuous,
    reduce_discrete,
    truncation_tv,
)
from .utils import make_rng, parallel_map

NULL_LAW_GRID = 2**18
NULL_LAW_MAX_TERMS = 64


@dataclass(frozen=True)
class MCEstimate:
    trials: int
    successes: int
    point: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, successes, trials):
        ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=0.95, method="wilson")
        point = successes / trials
        return cls(int(trials), int(successes), point, min(ci.low, point), max(ci.high, point))

    @property
    def se(self):
        return math.sqrt(self.point * (1 - self.point) / self.trials)

    def to_dict(self):
        return {
            "trials": self.trials, "successes": self.successes, "point": self.point,
            "ci_low": self.ci_low, "ci_high": self.ci_high, "se": self.se,
        }


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    atoms: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        masses = np.asarray(self.masses, dtype=np.float64)
        if atoms.shape != masses.shape or atoms.ndim != 1:
            raise ParameterError("atoms and masses must be 1-d arrays of equal length")
        if np.any(np.diff(atoms) <= 0):
            raise ParameterError("atoms must be strictly increasing")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-12:
            raise ParameterError(f"masses must be nonnegative and sum to 1, got sum {masses.sum()!r}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_samples(cls, samples):
        atoms, counts = np.unique(np.asarray(samples, dtype=np.float64), return_counts=True)
        return cls(atoms, counts / counts.sum())

    def mean(self):
        return float(self.atoms @ self.masses)

    def var(self):
        return float((self.atoms - self.mean()) ** 2 @ self.masses)


def _aligned(P, Q):
    atoms = np.union1d(P.atoms, Q.atoms)
    p = np.zeros(len(atoms))
    q = np.zeros(len(atoms))
    p[np.searchsorted(atoms, P.atoms)] = P.masses
    q[np.searchsorted(atoms, Q.atoms)] = Q.masses
    return p, q


def tv_discrete(P, Q):
    p, q = _aligned(P, Q)
    return float(0.5 * np.abs(p - q).sum())


def tv_product(P_factors, Q_factors):
    """Exact TV between ⊗P_i and ⊗Q_i by enumerating the joint atoms."""
    if len(P_factors) != len(Q_factors):
        raise ParameterError("products must have the same number of factors")
    p, q = np.ones(1), np.ones(1)
    for P, Q in zip(P_factors, Q_factors):
        pi, qi = _aligned(P, Q)
        p = np.multiply.outer(p, pi).ravel()
        q = np.multiply.outer(q, qi).ravel()
    return float(0.5 * np.abs(p - q).sum())


def _kinks(d, a, b, grid=2049):
    xs = np.linspace(a, b, grid)
    ys = d(xs)
    roots = []
    for i in np.flatnonzero(np.sign(ys[:-1]) * np.sign(ys[1:]) < 0):
        roots.append(brentq(lambda x: float(d(np.asarray(x))), xs[i], xs[i + 1]))
    return roots


def tv_density(f, g, support, tol=1e-10, breakpoints=()):
    """½∫|f - g| over support by adaptive Gauss-Kronrod quadrature.

    The integrand is split at the given breakpoints (truncation points) and
    at the sign changes of f - g located by bisection.
    """
    a, b = support
    d = lambda x: np.asarray(f(x), dtype=np.float64) - np.asarray(g(x), dtype=np.float64)
    cuts = sorted({a, b, *(x for x in breakpoints if a < x < b), *_kinks(d, a, b)})
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            try:
                value, _ = quad(lambda x: abs(float(d(np.asarray(x)))), lo, hi, epsabs=tol / len(cuts), epsrel=1e-12, limit=200)
            except IntegrationWarning as e:
                raise ConvergenceError(f"quadrature on [{lo}, {hi}] did not converge: {e}") from e
            total += value
    return 0.5 * total


def normal_density(mean=0.0):
    return lambda x: stats.norm.pdf(x, loc=mean)


def _mixture_cells(spec, centers, h):
    lo = np.clip(centers - h / 2, -spec.M, spec.M)
    hi = np.clip(centers + h / 2, -spec.M, spec.M)
    return np.clip(spec.c0 * normal_interval(lo, hi), 0.0, None)


def null_entry_law(spec, ell, grid_points=NULL_LAW_GRID):
    """Law of one null output entry: (1/ℓ)·(sum of ℓ² draws from the mixture), gridded.

    Cells of the mixture are convolved ℓ² times by FFT; the grid holds the
    whole support of the sum, so the circular convolution does not wrap.
    """
    n = ell * ell
    if n > NULL_LAW_MAX_TERMS:
        raise BudgetExceeded(f"null law needs {n} convolutions, budget is {NULL_LAW_MAX_TERMS}")
    h = 2 * (spec.M + 1) * n / grid_points
    J = math.ceil(spec.M / h) + 1
    single = _mixture_cells(spec, np.arange(-J, J + 1) * h, h)
    length = n * 2 * J + 1
    if length > grid_points:
        raise BudgetExceeded(f"convolution needs {length} grid points, have {grid_points}")
    spectrum = np.fft.rfft(single, grid_points) ** n
    law = np.clip(np.fft.irfft(spectrum, grid_points)[:length], 0.0, None)
    atoms = (np.arange(length) - n * J) * h / ell
    return DiscreteDist(atoms, law / law.sum())


def null_law_tv(spec, ell, grid_points=NULL_LAW_GRID):
    """TV between the gridded null law and N(0, 1) on the same cells."""
    law = null_entry_law(spec, ell, grid_points)
    width = law.atoms[1] - law.atoms[0] if len(law.atoms) > 1 else 2 * spec.M
    normal = normal_interval(law.atoms - width / 2, law.atoms + width / 2)
    outside = norm_cdf(law.atoms[0] - width / 2) + norm_cdf(-(law.atoms[-1] + width / 2))
    return float(0.5 * (np.abs(law.masses - normal).sum() + outside))


def mc_error(test, null_gen, alt_gen, trials, seed, threads=1):
    """Empirical Type-I and Type-II rates; trial i draws from streams (seed, i, 0|1)."""
    if trials < 100:
        raise ParameterError(f"need at least 100 trials, got {trials}")

    def run(i):
        false_alarm = bool(test(null_gen(make_rng(seed, i, 0))))
        miss = not bool(test(alt_gen(make_rng(seed, i, 1))))
        return false_alarm, miss

    outcomes = parallel_map(run, range(trials), threads)
    type1 = sum(fa for fa, _ in outcomes)
    type2 = sum(m for _, m in outcomes)
    return MCEstimate.from_counts(type1, trials), MCEstimate.from_counts(type2, trials)


def two_sample(P_samples, Q_samples, discrete=False):
    """p-value of KS (continuous) or χ² homogeneity (discrete) between two samples."""
    P_samples, Q_samples = np.ravel(P_samples), np.ravel(Q_samples)
    if min(len(P_samples), len(Q_samples)) < 1000:
        raise ParameterError("two-sample checks need at least 1000 samples on each side")
    if not discrete:
        return float(stats.ks_2samp(P_samples, Q_samples).pvalue)
    values = np.union1d(P_samples, Q_samples)
    table = np.vstack([
        np.bincount(np.searchsorted(values, P_samples), minlength=len(values)),
        np.bincount(np.searchsorted(values, Q_samples), minlength=len(values)),
    ])
    if table.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(table).pvalue)


def event_e_mc(k, p, trials, seed, ell=1):
    """Monte Carlo estimate of P{E^c} over uniform κ = 20k placements in [2pℓ]."""
    kappa, n2 = 20 * k, p * ell
    N = 2 * n2
    rng = make_rng(seed, kappa, p)
    misses = 0
    for start in range(0, trials, 10_000):
        batch = min(10_000, trials - start)
        V = np.argpartition(rng.random((batch, N)), kappa, axis=1)[:, :kappa] + 1
        lower = V <= n2
        residues = (np.where(lower, V, V - n2) - 1) % p
        hit1 = np.zeros((batch, p), dtype=bool)
        hit2 = np.zeros((batch, p), dtype=bool)
        rows = np.repeat(np.arange(batch), kappa).reshape(batch, kappa)
        hit1[rows[~lower], residues[~lower]] = True
        hit2[rows[lower], residues[lower]] = True
        E = (hit1.sum(axis=1) >= k) & (hit2.sum(axis=1) >= k)
        misses += int((~E).sum())
    return MCEstimate.from_counts(misses, trials)


def q_table_law(dist):
    """Q_which as a DiscreteDist (table mode)."""
    atoms = np.ldexp((dist.lo + np.arange(dist.n_atoms)).astype(np.float64), -dist.w)
    return DiscreteDist(atoms, np.ldexp(dist.masses.astype(np.float64), -dist.T))


def quantized_cell_law(dist):
    """[F_which]_w: the exact cell masses the table rounds."""
    atoms = np.ldexp((dist.lo + np.arange(dist.n_atoms)).astype(np.float64), -dist.w)
    masses = dist.cell_masses / dist.cell_masses.sum()
    return DiscreteDist(atoms, masses)


def _check(name, value, bound, passed=None):
    return {"name": name, "value": value, "bound": bound, "passed": bool(value <= bound) if passed is None else passed}


def truncation_bound_checks(ps=(8, 16, 32, 64), steps=6):
    """Both truncation TV bounds for every (M, μ) the parameter selection produces."""
    checks = []
    for p in ps:
        cap = 1 / (2 * math.sqrt(6 * math.log(2 * p)))
        for i in range(steps):
            lam = 0.999 * cap * 2.0 ** (-i)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ReductionWarning)
                params = choose_params(p, 1, lam, strict=False)
            tv = truncation_tv(params.pair())
            tag = f"p={p} ell={params.ell} M={params.M:.4f}"
            checks.append(_check(f"truncation mixture {tag}", tv["tv_mixture"], tv["bound_mixture"]))
            checks.append(_check(f"truncation f1 {tag}", tv["tv_f1"], tv["bound_f1"]))
    return checks


def mixture_identity_gap(spec, grid=100_000):
    xs = np.linspace(-spec.M - 0.5, spec.M + 0.5, grid)
    return float(np.max(np.abs((spec.f0(xs) + spec.f1(xs)) / 2 - spec.mixture(xs))))


def random_dist(rng, max_atoms=8, lattice=16):
    n = int(rng.integers(1, max_atoms + 1))
    atoms = np.sort(rng.choice(lattice, size=n, replace=False)).astype(np.float64)
    masses = rng.dirichlet(np.ones(n))
    masses[-1] = 1.0 - masses[:-1].sum()
    if masses[-1] < 0:
        masses = np.full(n, 1.0 / n)
    return DiscreteDist(atoms, masses)


def product_tv_violations(instances, seed, factors=2):
    """Number of random instances where TV(⊗P, ⊗Q) > Σ TV(P_i, Q_i)."""
    rng = make_rng(seed, 7)
    bad = 0
    for _ in range(instances):
        Ps = [random_dist(rng) for _ in range(factors)]
        Qs = [random_dist(rng) for _ in range(factors)]
        if tv_product(Ps, Qs) > sum(tv_discrete(P, Q) for P, Q in zip(Ps, Qs)) + 1e-12:
            bad += 1
    return bad


ERROR_BOUND_CASES = (("lin", 50, 10), ("max", 50, 10), ("scan", 24, 3))


def _planted_block(p, k, lam):
    def draw(rng):
        X = rng.standard_normal((p, p))
        X[:k, :k] += lam
        return X

    return draw


def error_bound_checks(trials, seed, lams=(1.0, 2.0), cases=ERROR_BOUND_CASES):
    """Empirical Type-I+II of each test against its analytic bound, with 3 SE of slack.

    The exact scan at (50, 10) is far over budget, so it runs at (24, 3).
    """
    checks = []
    for test, p, k in cases:
        for lam in lams:
            decide = lambda X, test=test, k=k, lam=lam: apply_test(test, X, k, lam).reject
            null = lambda rng, p=p: rng.standard_normal((p, p))
            type1, type2 = mc_error(decide, null, _planted_block(p, k, lam), trials, seed)
            slack = 3 * math.hypot(type1.se, type2.se)
            checks.append(_check(
                f"{test} error p={p} k={k} lambda={lam:g}",
                type1.point + type2.point,
                error_bounds(p, k, lam).bound(test) + slack,
            ))
    return checks


def scan_oracle_gap(instances, seed, p=6, k=2):
    """Largest |t_scan - brute force| over random p×p matrices."""
    rng = make_rng(seed, 11)
    gap = 0.0
    for _ in range(instances):
        X = rng.standard_normal((p, p))
        brute = max(
            X[np.ix_(S, T)].sum() / k
            for S in combinations(range(p), k)
            for T in combinations(range(p), k)
        )
        gap = max(gap, abs(t_scan(X, k).value - brute))
    return gap


def schatten_violations(instances, seed, qs=(1, 2, 4, math.inf), size=8, max_rank=5):
    """Random rank-k matrices where ‖A‖_Sq exceeds (1 ∨ k^(1/q-1/2)) ‖A‖_S2."""
    rng = make_rng(seed, 12)
    bad = 0
    for _ in range(instances):
        k = int(rng.integers(1, max_rank + 1))
        A = rng.standard_normal((size, k)) @ rng.standard_normal((k, size))
        s2 = schatten(A, 2)
        bad += sum(schatten(A, q) > schatten_ratio_bound(k, q) * s2 * (1 + 1e-12) for q in qs)
    return bad


def continuous_null_pvalue(params, samples, seed):
    """KS p-value of pooled reduce_continuous entries on G(N, 1/2) against direct N(0, 1) draws."""
    spec = params.pair()
    per_graph = params.p * params.p
    graphs = -(-samples // per_graph)
    pooled = np.concatenate([
        reduce_continuous(sample_er(params.N, make_rng(seed, 13, g)), spec, params, make_rng(seed, 14, g)).ravel()
        for g in range(graphs)
    ])[:samples]
    return two_sample(pooled, make_rng(seed, 15).standard_normal(samples))


def discrete_reduction_checks(params, seed):
    """reduce_discrete is a function of the coin stream alone and spends exactly 2 N2² T flips."""
    A = sample_er(params.N, make_rng(seed, 17))
    nbits = bit_budget(params).bits_consumed
    runs = []
    for threads in (1, 4):
        ledger = CoinLedger()
        X = reduce_discrete(A, params, CoinStream.from_seed(seed, nbits), ledger, threads=threads)
        runs.append((X, ledger))
    (X1, ledger1), (X4, _) = runs
    expected = 2 * params.N2 * params.N2 * params.T
    return [
        _check("discrete reduction thread independence", int((X1.mantissas != X4.mantissas).sum()), 0),
        _check("discrete reduction coin count", abs(ledger1.bits_consumed - expected), 0),
    ]


def verify_suite(seed=0, scale=1.0, on_check=None):
    """Run the bound suite; each check is a dict with name, value, bound, passed."""
    checks = []

    def add(items):
        for item in items:
            checks.append(item)
            if on_check is not None:
                on_check(item)

    add(truncation_bound_checks())
    for M in (3.0, 4.0, 5.0):
        add([_check(f"mixture identity M={M:g}", mixture_identity_gap(make_pair(M, 1 / (2 * M))), 1e-12)])

    instances = max(10, int(1000 * scale))
    add([_check("product TV bound", product_tv_violations(instances, seed), 0)])

    trials = max(1000, int(100_000 * scale))
    for k, p in ((1, 40), (2, 80)):
        est = event_e_mc(k, p, trials, seed)
        add([_check(f"event E k={k} p={p}", est.point, event_e_bound(k, p) + 3 * est.se)])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReductionWarning)
        params = choose_params(8, 1, 0.04, strict=False)
    spec = params.pair()
    add([_check(f"null law p=8 ell={params.ell}", null_law_tv(spec, params.ell), math.exp(-spec.M**2 / 2))])
    pvalue = continuous_null_pvalue(params, max(1000, int(100_000 * scale)), seed)
    add([_check(f"continuous null KS p=8 ell={params.ell} (alpha <= p-value)", 0.001, pvalue)])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReductionWarning)
        small = choose_params(8, 1, 0.1, t=8, w=10, strict=False)
    q1 = dyadic_distribution(1, small.pair(), small.w, small.T, "table")
    add([_check(
        "dyadic Q1 vs quantized F1",
        tv_discrete(q_table_law(q1), quantized_cell_law(q1)),
        q1.n_atoms * 2.0 ** (-small.T),
    )])
    add(discrete_reduction_checks(small, seed))

    add(error_bound_checks(max(100, int(10_000 * scale)), seed))
    add([_check("scan equals brute force 6x6 k=2", scan_oracle_gap(instances, seed), 1e-12)])
    add([_check("Schatten comparison", schatten_violations(instances, seed), 0)])

    return checks
