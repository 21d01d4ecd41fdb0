"""Estimation of a k×k-sparse mean matrix under Schatten-q loss."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import as_array, standard_normal_matrix
from .utils import parallel_map


def default_level(p):
    return math.sqrt(4 * math.log(p))


def hard_threshold(X, level):
    if level < 0:
        raise ParameterError(f"threshold level must be nonnegative, got {level}")
    X = as_array(X)
    return np.where(np.abs(X) > level, X, 0.0)


def row_project(theta_hat, k):
    """Keep the k rows of largest ℓ2 norm, ties to the smaller index."""
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    p = theta_hat.shape[0]
    if not 1 <= k <= p:
        raise ParameterError(f"k must lie in [1, {p}], got {k}")
    norms = np.einsum("ij,ij->i", theta_hat, theta_hat)
    keep = np.argsort(-norms, kind="stable")[:k]
    out = np.zeros_like(theta_hat)
    out[keep] = theta_hat[keep]
    return out


def threshold_project(X, k, level=None):
    X = as_array(X)
    level = default_level(X.shape[0]) if level is None else level
    return row_project(hard_threshold(X, level), k)


def schatten(A, q):
    """ℓq norm of the singular values; q = inf gives the spectral norm."""
    if not q >= 1:
        raise ParameterError(f"q must lie in [1, inf], got {q}")
    s = np.linalg.svd(np.asarray(A, dtype=np.float64), compute_uv=False)
    if not len(s):
        return 0.0
    if math.isinf(q):
        return float(s.max())
    return float(np.sum(s**q) ** (1.0 / q))


def schatten_ratio_bound(k, q):
    """(1 ∨ k^(1/q - 1/2)): ‖A‖_Sq <= this · ‖A‖_S2 for rank-k A."""
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    return max(1.0, k ** (inv_q - 0.5))


def minimax_rate(p, k, q):
    """k^(2/q + 1) + k^((2/q) ∨ 1) log(ep/k), the order of the squared Sq risk."""
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    return k ** (2 * inv_q + 1) + k ** max(2 * inv_q, 1.0) * math.log(math.e * p / k)


def hardness_annotation(k, p, delta):
    """k^-δ (k² ∧ p): the order of the risk any polynomial-time estimator is conjectured to pay."""
    return k ** (-delta) * min(k * k, p)


def risk_estimate(estimator, theta, q, trials, seed, threads=1):
    """Monte Carlo E‖θ̃ - θ‖²_Sq; trial i observes θ + Z from stream (seed, i)."""
    if trials < 100:
        raise ParameterError(f"need at least 100 trials, got {trials}")
    mean = theta.dense()

    def loss(i):
        X = mean + standard_normal_matrix(theta.p, seed, i)
        return schatten(estimator(X) - mean, q) ** 2

    losses = np.array(parallel_map(loss, range(trials), threads))
    return RiskEstimate.from_losses(losses)


@dataclass(frozen=True)
class RiskEstimate:
    """Mean loss over the trials with its standard error and normal 95% interval."""

    trials: int
    point: float
    se: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_losses(cls, losses):
        losses = np.asarray(losses, dtype=np.float64)
        n = len(losses)
        point = float(losses.mean())
        se = float(losses.std(ddof=1)) / math.sqrt(n)
        return cls(n, point, se, point - 1.96 * se, point + 1.96 * se)

    def to_dict(self):
        return {
            "trials": self.trials, "point": self.point, "se": self.se,
            "ci_low": self.ci_low, "ci_high": self.ci_high,
        }
