"""Planted clique instances and the index maps used by the reduction.

Vertices are 1-based labels in [N]. The reduction reads only the block
A0 = A[{N2+1..N}, {1..N2}], so V splits into the clique rows of A0 (V1)
and its clique columns (V2).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    """Symmetric 0/1 adjacency with zero diagonal, rows stored as packed bits."""

    N: int
    rows: np.ndarray
    planted: frozenset = None

    @classmethod
    def from_dense(cls, bits, planted=None):
        bits = np.asarray(bits).astype(bool)
        N = bits.shape[0]
        if bits.shape != (N, N):
            raise ParameterError(f"adjacency must be square, got shape {bits.shape}")
        if not np.array_equal(bits, bits.T):
            raise ParameterError("adjacency must be symmetric")
        if np.any(np.diag(bits)):
            raise ParameterError("adjacency must have a zero diagonal")
        if planted is not None:
            planted = frozenset(int(v) for v in planted)
            idx = np.array(sorted(planted), dtype=np.intp) - 1
            if len(idx) and (idx.min() < 0 or idx.max() >= N):
                raise ParameterError(f"planted vertices outside [1, {N}]")
            block = bits[np.ix_(idx, idx)] | np.eye(len(idx), dtype=bool)
            if not block.all():
                raise ParameterError("planted vertex set is not a clique")
        return cls(N, np.packbits(bits, axis=1), planted)

    def dense(self):
        return np.unpackbits(self.rows, axis=1, count=self.N).astype(bool)

    def has_edge(self, u, v):
        i, j = u - 1, v - 1
        return bool((self.rows[i, j >> 3] >> (7 - (j & 7))) & 1)

    @property
    def edge_count(self):
        return int(np.unpackbits(self.rows, axis=1, count=self.N).sum()) // 2

    def lower_left(self):
        """A0 as a uint8 N2×N2 matrix; only these rows are unpacked."""
        if self.N % 2:
            raise ParameterError(f"N must be even for the reduction, got {self.N}")
        n2 = self.N // 2
        return np.unpackbits(self.rows[n2:], axis=1, count=self.N)[:, :n2]


def _er_bits(N, rng):
    upper = np.triu(rng.integers(0, 2, size=(N, N), dtype=np.uint8), 1).astype(bool)
    return upper | upper.T


def sample_er(N, rng):
    if N < 1:
        raise ParameterError(f"N must be positive, got {N}")
    return AdjacencyMatrix.from_dense(_er_bits(N, rng))


def clique_vertices(N, kappa, rng):
    """κ uniform distinct labels by a partial Fisher-Yates shuffle."""
    perm = np.arange(1, N + 1)
    for i in range(kappa):
        j = int(rng.integers(i, N))
        perm[i], perm[j] = perm[j], perm[i]
    return frozenset(int(v) for v in perm[:kappa])


def sample_planted(N, kappa, rng):
    if not 1 <= kappa <= N:
        raise ParameterError(f"clique size must lie in [1, N = {N}], got {kappa}")
    bits = _er_bits(N, rng)
    V = clique_vertices(N, kappa, rng)
    idx = np.array(sorted(V), dtype=np.intp) - 1
    bits[np.ix_(idx, idx)] = True
    np.fill_diagonal(bits, False)
    return AdjacencyMatrix.from_dense(bits, planted=V)


def split_clique(V, N):
    if N % 2:
        raise ParameterError(f"N must be even, got {N}")
    n2 = N // 2
    V1 = frozenset(v - n2 for v in V if v > n2)
    V2 = frozenset(v for v in V if v <= n2)
    return V1, V2


def fold(x, p):
    """h(x) = 1 + (x - 1) mod p."""
    return 1 + (x - 1) % p


def preimage(a, p, ell):
    """h^-1(a) inside [p*ell]."""
    return [a + m * p for m in range(ell)]


def image_supports(V1, V2, p):
    return frozenset(fold(v, p) for v in V1), frozenset(fold(v, p) for v in V2)


def event_E(U1, U2, k):
    return len(U1) >= k and len(U2) >= k


@dataclass(frozen=True)
class FoldReport:
    V1: frozenset
    V2: frozenset
    U1: frozenset
    U2: frozenset
    eventE: bool

    def to_dict(self):
        return {
            "V1": sorted(self.V1), "V2": sorted(self.V2),
            "U1": sorted(self.U1), "U2": sorted(self.U2), "eventE": self.eventE,
        }


def fold_report(V, N, p, k):
    V1, V2 = split_clique(V, N)
    U1, U2 = image_supports(V1, V2, p)
    return FoldReport(V1, V2, U1, U2, event_E(U1, U2, k))


def block_sets(V1, V2, p, ell, a, b):
    """(N_ab, T_ab): positions of h^-1(a)×h^-1(b) outside and inside V1×V2."""
    cells = {(i, j) for i in preimage(a, p, ell) for j in preimage(b, p, ell)}
    inside = {(i, j) for (i, j) in cells if i in V1 and j in V2}
    return cells - inside, inside


def expected_alt_mean(V1, V2, p, ell, mu):
    """μ|T_ab|/ℓ for every (a, b): the mean of the ideal alternative output."""
    rows = np.bincount(np.array([fold(v, p) - 1 for v in V1], dtype=np.intp), minlength=p)
    cols = np.bincount(np.array([fold(v, p) - 1 for v in V2], dtype=np.intp), minlength=p)
    return mu * np.outer(rows, cols) / ell


def event_e_bound(k, p):
    """Upper bound on P{E^c} for κ = 20k clique vertices folded into [p]."""
    return 40 * k * (math.e / 4) ** (5 * k) + 2 * k * math.exp(-4 * k * math.log(p / (20 * k)))
