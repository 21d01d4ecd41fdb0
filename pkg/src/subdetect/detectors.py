"""Linear, scan and maximum tests for a planted k×k submatrix.

All statistics accept a real p×p array or a QuantizedMatrix. Sets returned
by the scan are tuples of 1-based labels.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations, islice
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .errors import BudgetExceeded, ParameterError
from .model import as_array
from .utils import parallel_map

DEFAULT_C = 1.0
DEFAULT_SCAN_BUDGET = 10_000_000
_CHUNK = 4096


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    statistic: float
    threshold: float
    reject: bool

    @classmethod
    def of(cls, statistic, threshold):
        return cls(float(statistic), float(threshold), bool(statistic > threshold))

    def to_dict(self):
        return {"statistic": self.statistic, "threshold": self.threshold, "reject": self.reject}


class Thresholds(NamedTuple):
    lin: float
    scan: float
    max: float


@dataclass(frozen=True)
class ErrorBoundReport:
    p: int
    k: int
    lam: float
    c: float
    bound_lin: float
    bound_scan: float
    bound_max: float
    raw: dict = field(default_factory=dict)

    def bound(self, test):
        return {"lin": self.bound_lin, "scan": self.bound_scan, "max": self.bound_max}[test]

    def to_dict(self):
        return {
            "p": self.p, "k": self.k, "lambda": self.lam, "c": self.c,
            "bound_lin": self.bound_lin, "bound_scan": self.bound_scan,
            "bound_max": self.bound_max, "raw": dict(self.raw),
        }


class ScanResult(NamedTuple):
    value: float
    S: tuple
    T: tuple


def t_lin(X):
    X = as_array(X)
    return float(X.sum() / X.shape[0])


def t_max(X):
    return float(as_array(X).max())


def scan_cost(p, k):
    return math.comb(p, k) * p * k


def _best_in_chunk(X, combos, k):
    R = X[:, combos].sum(axis=2)
    # stable sort on -R keeps the smallest row index first among ties
    order = np.argsort(-R, axis=0, kind="stable")[:k]
    vals = np.take_along_axis(R, order, axis=0).sum(axis=0)
    best = vals.max()
    candidates = []
    for b in np.flatnonzero(vals == best):
        S = tuple(sorted(int(i) + 1 for i in order[:, b]))
        T = tuple(int(j) + 1 for j in combos[b])
        candidates.append((S, T))
    S, T = min(candidates)
    return float(best), S, T


def _column_chunks(p, k):
    it = combinations(range(p), k)
    while True:
        chunk = list(islice(it, _CHUNK))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.intp)


def t_scan(X, k, budget=DEFAULT_SCAN_BUDGET, threads=1):
    """Exact scan statistic (1/k) max over k×k blocks, with one maximizing (S, T).

    For a fixed column set the best rows are the top-k restricted row sums,
    so only column subsets are enumerated.
    """
    X = as_array(X)
    p = X.shape[0]
    if not 1 <= k <= p:
        raise ParameterError(f"k must lie in [1, {p}], got {k}")
    cost = scan_cost(p, k)
    if cost > budget:
        raise BudgetExceeded(
            f"exact scan at p = {p}, k = {k} needs {cost} evaluations, budget is {budget}; "
            f"use a smaller (p, k)"
        )
    results = parallel_map(lambda combos: _best_in_chunk(X, combos, k), _column_chunks(p, k), threads)
    _, S, T = min(results, key=lambda r: (-r[0], r[1], r[2]))
    value = X[np.ix_(np.array(S) - 1, np.array(T) - 1)].sum() / k
    return ScanResult(float(value), S, T)


def log_binom(p, k):
    return float(gammaln(p + 1) - gammaln(k + 1) - gammaln(p - k + 1))


def thresholds(p, k, lam, c=DEFAULT_C):
    if c <= 0:
        raise ParameterError(f"c must be positive, got {c}")
    tau = lam * k * k / (2 * p)
    tau_scan = math.sqrt((4 + c) * log_binom(p, k))
    tau_max = math.sqrt((4 + c) * math.log(p))
    return Thresholds(tau, tau_scan, tau_max)


def _pos(x):
    return max(x, 0.0)


def error_bounds(p, k, lam, c=DEFAULT_C):
    """Type-I+II bounds of the three tests at their default thresholds, clipped to 1."""
    _, tau_scan, tau_max = thresholds(p, k, lam, c)
    raw = {
        "lin": math.exp(-(lam**2) * k**4 / (8 * p * p)),
        "scan": math.exp(-c / 2 * log_binom(p, k)) + math.exp(-0.5 * _pos(lam * k - tau_scan) ** 2),
        "max": p ** (-c / 2) + math.exp(-0.5 * _pos(lam - tau_max) ** 2),
    }
    return ErrorBoundReport(
        p, k, float(lam), float(c),
        min(raw["lin"], 1.0), min(raw["scan"], 1.0), min(raw["max"], 1.0), raw,
    )


def support_recovery_test(X, U_hat, V_hat, tau_scan):
    """Compare (1/k) Σ_{Û×V̂} X_ij with τ′, on the scale of the scan statistic."""
    X = as_array(X)
    p = X.shape[0]
    U_hat, V_hat = sorted(U_hat), sorted(V_hat)
    if len(U_hat) != len(V_hat) or not U_hat:
        raise ParameterError(f"support sizes must be equal and positive, got {len(U_hat)} and {len(V_hat)}")
    if len(set(U_hat)) != len(U_hat) or len(set(V_hat)) != len(V_hat):
        raise ParameterError("support estimates must not repeat indices")
    for i in (*U_hat, *V_hat):
        if not 1 <= i <= p:
            raise ParameterError(f"index {i} outside [1, {p}]")
    k = len(U_hat)
    stat = X[np.ix_(np.array(U_hat) - 1, np.array(V_hat) - 1)].sum() / k
    return TestOutcome.of(stat, tau_scan)


TESTS = ("lin", "scan", "max")


def apply_test(test, X, k, lam, c=DEFAULT_C, budget=DEFAULT_SCAN_BUDGET, threads=1):
    """Run one of the three tests at its analytic threshold."""
    X = as_array(X)
    tau = thresholds(X.shape[0], k, lam, c)
    if test == "lin":
        return TestOutcome.of(t_lin(X), tau.lin)
    if test == "scan":
        return TestOutcome.of(t_scan(X, k, budget, threads).value, tau.scan)
    if test == "max":
        return TestOutcome.of(t_max(X), tau.max)
    raise ParameterError(f"unknown test {test!r}, expected one of {TESTS}")


class Regime(Enum):
    IMPOSSIBLE = "statistically-impossible"
    EASY = "poly-time-easy"
    HARD = "hard-under-PC"
    BOUNDARY = "boundary"


def beta_star(alpha):
    return max(alpha / 2, 2 * alpha - 1)


def beta_sharp(alpha):
    return max(0.0, 2 * alpha - 1)


def regime(alpha, beta):
    if not 0 < alpha < 1 or not 0 <= beta <= 1:
        raise ParameterError(f"need alpha in (0, 1) and beta in [0, 1], got ({alpha}, {beta})")
    b_star, b_sharp = beta_star(alpha), beta_sharp(alpha)
    if math.isclose(beta, b_star, abs_tol=1e-12) or math.isclose(beta, b_sharp, abs_tol=1e-12):
        return Regime.BOUNDARY
    if beta > b_star:
        return Regime.IMPOSSIBLE
    if beta < b_sharp:
        return Regime.EASY
    return Regime.HARD


def detection_boundaries(p, k, lam):
    """Finite-p values of the two statistical detection conditions.

    `lin_ratio` → ∞ or `scan_ratio` > 1 eventually means reliable detection
    is possible; both small means it is impossible.
    """
    alpha = math.log(k) / math.log(p)
    beta = -math.log(lam) / math.log(p) if lam > 0 else math.inf
    scan_level = 2 * math.sqrt(math.log(p / k) / k) if k < p else 0.0
    return {
        "alpha": alpha,
        "beta": beta,
        "lin_ratio": lam / (p / k**2),
        "scan_ratio": lam / scan_level if scan_level > 0 else math.inf,
        "beta_star": beta_star(alpha),
        "beta_sharp": beta_sharp(alpha),
    }
