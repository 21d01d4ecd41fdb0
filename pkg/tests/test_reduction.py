import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.integrate import quad

from subdetect.errors import CoinsExhausted, ParameterError, QuantizationOverflow, ReductionWarning
from subdetect.model import DyadicReal, make_mean_matrix, sample_discretized
from subdetect.oracles import mixture_identity_gap, q_table_law, quantized_cell_law, tv_discrete, two_sample
from subdetect.plantedclique import AdjacencyMatrix, expected_alt_mean, sample_er, sample_planted, split_clique
from subdetect.reduction import (
    CoinLedger,
    CoinStream,
    DyadicDistribution,
    alias_sums,
    bit_budget,
    choose_params,
    density_f0,
    density_f1,
    dyadic_cdf,
    dyadic_distribution,
    gaussianize,
    largest_ell,
    make_pair,
    norm_sf,
    partition_average,
    reduce_continuous,
    reduce_discrete,
    sample_f0,
    sample_f1,
    sample_q,
    theorem_beta,
    truncation_tv,
)
from subdetect.utils import make_rng


def ell_cost(p, ell):
    n = 2 * p * ell
    return n * math.sqrt(6 * math.log(n))


def relaxed(*args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReductionWarning)
        return choose_params(*args, strict=False, **kwargs)


def test_norm_sf_matches_scipy():
    xs = np.array([-3.0, 0.0, 1.5, 6.0, 12.0, 30.0])
    assert np.allclose(norm_sf(xs), stats.norm.sf(xs), rtol=1e-10, atol=0)
    assert norm_sf(0.0) == pytest.approx(0.5)
    assert norm_sf(60.0) >= 0.0


def test_make_pair_validation():
    with pytest.raises(ParameterError):
        make_pair(2.5, 0.1)
    with pytest.raises(ParameterError):
        make_pair(4.0, 0.2)
    spec = make_pair(3.0, 1 / 6)
    assert spec.c0 > 1 and spec.c1 > 1


@pytest.mark.parametrize("M", [3.0, 4.0, 5.0])
def test_mixture_identity(M):
    assert mixture_identity_gap(make_pair(M, 1 / (2 * M))) <= 1e-12


@pytest.mark.parametrize("M", [3.0, 4.5])
def test_densities_integrate_to_one(M):
    spec = make_pair(M, 1 / (2 * M))
    for density in (density_f0, density_f1):
        total, _ = quad(lambda x: float(density(x, spec)), -M, M, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert total == pytest.approx(1.0, abs=1e-10)
        assert density(M + 0.01, spec) == 0.0
        assert density(-M - 0.01, spec) == 0.0


def test_f0_is_nonnegative():
    spec = make_pair(3.0, 1 / 6)
    xs = np.linspace(-3.0, 3.0, 100_000)
    assert np.all(spec.f0(xs) >= 0)


def test_truncation_bounds():
    for M in (3.0, 4.0, 6.0):
        tv = truncation_tv(make_pair(M, 1 / (2 * M)))
        assert tv["tv_mixture"] <= tv["bound_mixture"]
        assert tv["tv_f1"] <= tv["bound_f1"]


def test_f1_samples_match_density(rng):
    spec = make_pair(4.0, 0.125)
    samples = sample_f1(spec, rng, 100_000)
    assert np.all(np.abs(samples) <= spec.M)
    edges = np.linspace(-spec.M, spec.M, 51)
    observed, _ = np.histogram(samples, edges)
    expected = spec.mass(1, edges[:-1], edges[1:])
    expected = expected / expected.sum() * observed.sum()
    keep = expected >= 5
    obs, exp = observed[keep], expected[keep]
    if not keep.all():
        obs = np.append(obs, observed[~keep].sum())
        exp = np.append(exp, expected[~keep].sum())
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_mixture_samples_are_centered(rng):
    spec = make_pair(4.0, 0.125)
    n = 50_000
    f0 = sample_f0(spec, rng, n)
    f1 = sample_f1(spec, rng, n)
    assert np.all(np.abs(f0) <= spec.M)
    pooled = np.concatenate([f0, f1])
    assert abs(pooled.mean()) < 4 / math.sqrt(2 * n)
    assert f1.mean() - f0.mean() == pytest.approx(2 * spec.mu, abs=8 / math.sqrt(n))


def test_sample_scalar(rng):
    spec = make_pair(3.0, 1 / 6)
    assert isinstance(sample_f0(spec, rng), float)


def test_choose_params_examples():
    params = choose_params(80, 2, 0.05)
    assert params.kappa == 40
    assert params.ell == 1
    assert params.N == 160
    assert params.mu == pytest.approx(1 / (2 * params.M))
    assert params.w_condition

    with pytest.warns(ReductionWarning):
        small = choose_params(16, 1, 0.1, strict=False)
    assert (small.t, small.w) == (16, 64)


def test_choose_params_preconditions():
    with pytest.raises(ParameterError):
        choose_params(16, 1, 0.1)
    with pytest.raises(ParameterError):
        relaxed(16, 1, 0.5)
    with pytest.raises(QuantizationOverflow):
        choose_params(80, 2, 0.05, t=57)
    with pytest.warns(ReductionWarning):
        choose_params(80, 2, 0.05, w=20)


@given(st.integers(min_value=3, max_value=2000), st.floats(min_value=1e-4, max_value=1.0))
def test_largest_ell_is_largest(p, fraction):
    cap = 1 / (2 * math.sqrt(6 * math.log(2 * p)))
    lam = cap * fraction * 0.999
    ell = largest_ell(p, lam)
    assert ell >= 1
    assert ell_cost(p, ell) <= p / lam < ell_cost(p, ell + 1)


def test_gaussianize():
    B0, B1 = np.full((3, 3), -1.0), np.full((3, 3), 1.0)
    assert np.array_equal(gaussianize(np.zeros((3, 3)), B0, B1), B0)
    assert np.array_equal(gaussianize(np.ones((3, 3)), B0, B1), B1)
    A0 = np.eye(3)
    assert np.array_equal(gaussianize(A0, B0, B1), 2 * A0 - 1)
    with pytest.raises(ParameterError):
        gaussianize(np.zeros((2, 2)), B0, B1)


def test_partition_average():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((4, 4))
    assert np.array_equal(partition_average(B, 4, 1), B)
    assert np.all(partition_average(np.ones((12, 12)), 4, 3) == 3.0)

    p, ell = 3, 4
    B = rng.standard_normal((p * ell, p * ell))
    X = partition_average(B, p, ell)
    for a in range(p):
        for b in range(p):
            rows = [a + m * p for m in range(ell)]
            cols = [b + m * p for m in range(ell)]
            assert X[a, b] == pytest.approx(B[np.ix_(rows, cols)].sum() / ell)
    with pytest.raises(ParameterError):
        alias_sums(B, p, ell + 1)


def test_continuous_null_entries_are_normal():
    params = relaxed(8, 1, 0.04)
    assert params.ell == 2
    spec = params.pair()
    entries = []
    for i in range(2000):
        A = sample_er(params.N, make_rng(5, i, 0))
        entries.append(reduce_continuous(A, spec, params, make_rng(5, i, 1)).ravel())
    assert stats.kstest(np.concatenate(entries), "norm").pvalue > 0.001


def test_continuous_alternative_mean():
    params = relaxed(8, 1, 0.04)
    spec = params.pair()
    reps, gaps = 400, []
    for i in range(reps):
        A = sample_planted(params.N, params.kappa, make_rng(6, i, 0))
        V1, V2 = split_clique(A.planted, params.N)
        X = reduce_continuous(A, spec, params, make_rng(6, i, 1))
        gaps.append((X - expected_alt_mean(V1, V2, params.p, params.ell, spec.mu)).mean())
    assert abs(np.mean(gaps)) < 4 / math.sqrt(reps * params.p**2)


def test_reduce_continuous_checks_size(small_params):
    A = sample_er(10, make_rng(0))
    with pytest.raises(ParameterError):
        reduce_continuous(A, None, small_params, make_rng(0))


def test_table_masses(small_params):
    spec = small_params.pair()
    for which in (0, 1):
        dist = DyadicDistribution(which, spec, small_params.w, small_params.T, "table")
        assert np.all(dist.masses >= 0)
        assert int(dist.masses.sum()) == 2**small_params.T
        assert dyadic_cdf(which, dist.n_atoms, spec, small_params.w, small_params.T) == DyadicReal(1, 0)


def test_table_and_lazy_cumulatives_agree(small_params):
    spec = small_params.pair()
    table = DyadicDistribution(1, spec, small_params.w, small_params.T, "table")
    lazy = DyadicDistribution(1, spec, small_params.w, small_params.T, "lazy")
    C_lazy = lazy.analytic_cumulative()
    diff = table.cumulative - C_lazy
    remaining = table.n_atoms - np.arange(table.n_atoms)
    assert np.all(diff >= -2)
    assert np.all(diff <= remaining + 2)
    for j in (0, 17, table.n_atoms // 2, table.n_atoms - 1):
        assert lazy.cdf_mantissa(j) == C_lazy[j]


def test_table_and_lazy_sample_the_same_atoms_mostly(small_params):
    spec = small_params.pair()
    T = small_params.T
    table = DyadicDistribution(0, spec, small_params.w, T, "table")
    lazy = DyadicDistribution(0, spec, small_params.w, T, "lazy")
    U = CoinStream.from_seed(1, 2000 * T).uniforms(2000, T)
    mismatch = np.mean(table.atom_mantissas(U) != lazy.atom_mantissas(U))
    bound = np.abs(table.cumulative - lazy.analytic_cumulative()).sum() / 2**T
    assert mismatch <= bound + 3 * math.sqrt(max(bound, 1e-4) / 2000)


def test_q1_is_close_to_quantized_f1(small_params):
    dist = dyadic_distribution(1, small_params.pair(), small_params.w, small_params.T, "table")
    tv = tv_discrete(q_table_law(dist), quantized_cell_law(dist))
    assert tv <= dist.n_atoms * 2.0 ** (-small_params.T)


def test_sample_q_charges_t_bits(small_params):
    dist = dyadic_distribution(0, small_params.pair(), small_params.w, small_params.T, "table")
    coins = CoinStream.from_seed(3, 10 * small_params.T)
    ledger = CoinLedger()
    for _ in range(10):
        atom = sample_q(dist, coins, ledger)
        assert atom.scale == small_params.w
    assert ledger.bits_consumed == 10 * small_params.T
    with pytest.raises(CoinsExhausted):
        sample_q(dist, coins, ledger)


def test_sampled_pmf_matches_table():
    spec = make_pair(4.0, 0.125)
    dist = DyadicDistribution(1, spec, 8, 20, "table")
    n = 200_000
    U = CoinStream.from_seed(9, n * 20).uniforms(n, 20)
    counts = np.bincount(dist.index_of(U), minlength=dist.n_atoms)
    q = dist.masses / 2.0**20
    sd = np.sqrt(q * (1 - q) / n)
    assert np.all(counts[q == 0] == 0)
    assert np.all(np.abs(counts / n - q) <= 5 * sd + 1 / n)


def test_uniforms_cover_long_words():
    U = CoinStream.from_seed(0, 3 * 70).uniforms(3, 70)
    assert all(1 <= int(u) <= 2**70 for u in U)


def test_lazy_mode_with_wide_words():
    spec = make_pair(4.0, 0.125)
    dist = DyadicDistribution(0, spec, 8, 70, "auto")
    assert dist.mode == "lazy"
    assert dist.cdf_mantissa(dist.n_atoms - 1) == 2**70
    U = CoinStream.from_seed(4, 20 * 70).uniforms(20, 70)
    idx = dist.index_of(U)
    assert np.all((0 <= idx) & (idx < dist.n_atoms))


def test_lazy_indices_past_int64():
    spec = make_pair(4.0, 0.125)
    dist = DyadicDistribution(1, spec, 70, 90, "lazy")
    assert dist.n_atoms >= 2**63
    U = CoinStream.from_seed(5, 40 * 90).uniforms(40, 90)
    idx = dist.index_of(U)
    assert idx.dtype == object
    for u, j in list(zip(U, idx))[:5]:
        assert dist.cdf_mantissa(j) >= u
        assert j == 0 or dist.cdf_mantissa(j - 1) < u
    order = sorted(range(len(U)), key=lambda i: int(U[i]))
    ranked = [int(idx[i]) for i in order]
    assert ranked == sorted(ranked)
    assert all(-spec.M <= math.ldexp(float(m), -70) < spec.M for m in dist.atom_mantissas(U))


def test_lazy_cdf_is_monotone_on_a_fine_grid():
    dist = DyadicDistribution(0, make_pair(4.0, 0.125), 64, 80, "lazy")
    # atoms near -M sit past 2**53 on the grid and share float edges
    js = list(range(0, 3000, 7)) + [dist.n_atoms // 2 + d for d in range(-2000, 2000, 7)]
    C = [dist.cdf_mantissa(j) for j in js]
    assert C == sorted(C)
    assert dist.cdf_mantissa(dist.n_atoms - 1) == 2**80


def test_reduce_discrete_at_default_parameters():
    params = choose_params(40, 1, 0.05)
    assert (params.w, params.T) == (96, 118)
    A = sample_planted(params.N, params.kappa, make_rng(3))
    bits = bit_budget(params).bits_consumed
    ledger = CoinLedger()
    X = reduce_discrete(A, params, CoinStream.from_seed(0, bits), ledger)
    assert ledger.bits_consumed == bits == 2 * params.N2**2 * params.T
    assert X.t == params.t
    assert X.p == params.p
    assert np.all(np.abs(X.values()) <= params.ell * params.M + 2.0 ** -params.t)
    assert reduce_discrete(A, params, CoinStream.from_seed(0, bits), threads=3) == X


def test_table_atoms_max_selects_lazy_mode(small_params):
    spec = small_params.pair()
    assert dyadic_distribution(0, spec, small_params.w, small_params.T, "auto", 10).mode == "lazy"
    A = sample_er(small_params.N, make_rng(6))
    bits = bit_budget(small_params).bits_consumed
    table = reduce_discrete(A, small_params, CoinStream.from_seed(9, bits))
    lazy = reduce_discrete(A, small_params, CoinStream.from_seed(9, bits), table_atoms_max=10)
    # same coins, two dyadic laws that differ on few U
    assert np.mean(table.mantissas != lazy.mantissas) < 0.05


def test_distribution_cache_is_small():
    assert dyadic_distribution.cache_info().maxsize == 2


def test_reduce_discrete_is_deterministic(small_params):
    A = sample_er(small_params.N, make_rng(2))
    bits = bit_budget(small_params).bits_consumed
    outputs = []
    for threads in (1, 1, 4):
        ledger = CoinLedger()
        X = reduce_discrete(A, small_params, CoinStream.from_seed(7, bits), ledger, threads=threads)
        assert ledger.bits_consumed == 2 * small_params.N2**2 * small_params.T
        assert ledger.phases == {"B0": bits // 2, "B1": bits // 2}
        outputs.append(X)
    assert outputs[0] == outputs[1] == outputs[2]
    assert outputs[0].t == small_params.t
    with pytest.raises(CoinsExhausted):
        reduce_discrete(A, small_params, CoinStream.from_seed(7, bits - 1))


def test_empty_graph_outputs_requantized_q0_atoms(small_params):
    A = AdjacencyMatrix.from_dense(np.zeros((small_params.N, small_params.N), dtype=bool))
    bits = bit_budget(small_params).bits_consumed
    X = reduce_discrete(A, small_params, CoinStream.from_seed(8, bits))
    q0 = dyadic_distribution(0, small_params.pair(), small_params.w, small_params.T)
    n = small_params.N2**2
    U = CoinStream.from_seed(8, bits).uniforms(n, small_params.T)
    expected = q0.atom_mantissas(U).reshape(small_params.N2, small_params.N2)
    assert np.array_equal(X.mantissas, expected >> (small_params.w - small_params.t))


def test_discrete_null_matches_discretized_gaussian(small_params):
    bits = bit_budget(small_params).bits_consumed
    reduced, direct = [], []
    zero = make_mean_matrix(small_params.p, [], [], 0.0)
    for i in range(2000):
        A = sample_er(small_params.N, make_rng(11, i))
        reduced.append(reduce_discrete(A, small_params, CoinStream.from_seed(11, bits, i)).values().ravel())
        direct.append(sample_discretized(zero, small_params.t, seed=12, matrix_id=i).values().ravel())
    assert two_sample(np.concatenate(reduced), np.concatenate(direct)) > 0.001


def test_bit_budget_forecast(small_params):
    forecast = bit_budget(small_params)
    assert forecast.bits_consumed == 2 * small_params.N2**2 * small_params.T
    assert forecast.operations > 0


def test_theorem_beta_arithmetic():
    p, k = 80, 2
    tail = 40 * k * (math.e / 4) ** (5 * k) + 2 * k * math.exp(-4 * k * math.log(p / (20 * k)))
    assert theorem_beta(p, k)["beta"] == pytest.approx(2 / p + tail)
    discrete = theorem_beta(p, k, discrete=True)
    assert discrete["beta"] == pytest.approx(10 / p + tail)
    assert discrete["beta0"] == pytest.approx(5 / p)
