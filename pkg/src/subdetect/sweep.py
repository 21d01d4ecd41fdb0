"""Phase-diagram sweeps and the end-to-end reduction demo.

A sweep cell is one (p, α, β, test). Each cell draws from its own seed,
derived from the sweep seed and the cell's grid position, so the report is
the same whatever the number of threads. Wall-clock runtimes are kept out
of the report files and written to timings.json instead.
"""

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detectors import (
    DEFAULT_C,
    DEFAULT_SCAN_BUDGET,
    TESTS,
    apply_test,
    beta_sharp,
    beta_star,
    detection_boundaries,
    error_bounds,
    regime,
    scan_cost,
    thresholds,
    t_scan,
)
from .errors import ConfigError, ParameterError
from .estimators import hardness_annotation
from .model import quantize_matrix
from .oracles import MCEstimate, mc_error
from .plantedclique import event_e_bound, fold_report, sample_er, sample_planted
from .reduction import (
    CoinLedger,
    CoinStream,
    TABLE_ATOMS_MAX,
    bit_budget,
    choose_params,
    reduce_discrete,
    theorem_beta,
)
from .utils import make_rng, parallel_map

REGION_COLORS = {"easy": "#cfe8cf", "hard": "#f6e3b4", "impossible": "#e9c4c4"}
TEST_COLORS = {"lin": "#1f77b4", "scan": "#d62728", "max": "#2ca02c"}
TEST_OFFSETS = {"lin": -0.015, "scan": 0.0, "max": 0.015}


@dataclass
class SweepConfig:
    p: list
    alpha: list
    beta: list
    trials: int = 200
    tests: list = field(default_factory=lambda: list(TESTS))
    seed: int = 0
    budget: int = DEFAULT_SCAN_BUDGET
    delta: float = 0.1
    c: float = 1.0

    def __post_init__(self):
        self.p = [int(p) for p in self.p]
        self.alpha = [float(a) for a in self.alpha]
        self.beta = [float(b) for b in self.beta]
        self.tests = [str(t) for t in self.tests]
        if not self.p or not self.alpha or not self.beta or not self.tests:
            raise ConfigError("sweep grids and the test list must be non-empty")
        if any(p < 2 for p in self.p):
            raise ConfigError(f"every p must be at least 2, got {self.p}")
        if any(not 0 < a < 1 for a in self.alpha):
            raise ConfigError(f"alpha values must lie in (0, 1), got {self.alpha}")
        if any(not 0 <= b <= 1 for b in self.beta):
            raise ConfigError(f"beta values must lie in [0, 1], got {self.beta}")
        if self.trials < 100:
            raise ConfigError(f"trials must be at least 100, got {self.trials}")
        unknown = [t for t in self.tests if t not in TESTS]
        if unknown:
            raise ConfigError(f"unknown tests {unknown}, expected a subset of {list(TESTS)}")

    @classmethod
    def from_config(cls, config):
        return cls(
            p=config.get("p"),
            alpha=config.get("alpha"),
            beta=config.get("beta"),
            trials=int(config.get("trials")),
            tests=config.get("tests"),
            seed=int(config.get("seed")),
            budget=int(config.get("scan_budget")),
            delta=float(config.get("delta")),
            c=float(config.get("c")),
        )

    def to_dict(self):
        return {
            "p": self.p, "alpha": self.alpha, "beta": self.beta, "trials": self.trials,
            "tests": self.tests, "seed": self.seed, "budget": self.budget,
            "delta": self.delta, "c": self.c,
        }


@dataclass
class SweepCell:
    p: int
    alpha: float
    beta: float
    test: str
    k: int
    lam: float
    regime: str
    status: str
    type1: MCEstimate = None
    type2: MCEstimate = None
    analytic_bound: float = None
    runtime: float = 0.0

    @property
    def key(self):
        return (self.p, self.alpha, self.beta, TESTS.index(self.test))

    @property
    def error(self):
        if self.status != "ok":
            return None
        return self.type1.point + self.type2.point

    @property
    def error_ci(self):
        if self.status != "ok":
            return None
        return (self.type1.ci_low + self.type2.ci_low, min(2.0, self.type1.ci_high + self.type2.ci_high))

    def to_dict(self):
        out = {
            "p": self.p, "alpha": self.alpha, "beta": self.beta, "test": self.test,
            "k": self.k, "lambda": self.lam, "regime": self.regime, "status": self.status,
            "error": self.error, "analytic_bound": self.analytic_bound,
        }
        if self.status == "ok":
            out["error_ci"] = list(self.error_ci)
            out["type1"] = self.type1.to_dict()
            out["type2"] = self.type2.to_dict()
        return out


@dataclass
class SweepReport:
    config: SweepConfig
    cells: list
    annotations: list

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
            "annotations": self.annotations,
        }


def cell_seed(seed, p, ia, ib, it):
    return int(np.random.SeedSequence([int(seed), p, ia, ib, it]).generate_state(1)[0])


def sweep_k(p, alpha):
    return max(1, min(p, round(p**alpha)))


def _alternative(p, k, lam):
    def draw(rng):
        X = rng.standard_normal((p, p))
        X[:k, :k] += lam
        return X

    return draw


def _null(p):
    return lambda rng: rng.standard_normal((p, p))


def run_cell(config, p, ia, ib, it):
    alpha, beta, test = config.alpha[ia], config.beta[ib], config.tests[it]
    k, lam = sweep_k(p, alpha), p ** (-beta)
    label = regime(alpha, beta).value
    cell = SweepCell(p, alpha, beta, test, k, lam, label, "ok")
    if test == "scan" and scan_cost(p, k) > config.budget:
        cell.status = "budget-skipped"
        return cell

    started = time.perf_counter()
    cell.analytic_bound = min(1.0, error_bounds(p, k, lam, config.c).bound(test))
    decide = lambda X: apply_test(test, X, k, lam, config.c, config.budget).reject
    cell.type1, cell.type2 = mc_error(
        decide, _null(p), _alternative(p, k, lam), config.trials, cell_seed(config.seed, p, ia, ib, it)
    )
    cell.runtime = time.perf_counter() - started
    return cell


def run_sweep(config, threads=1, on_cell=None):
    """All cells of the grid, sorted by (p, α, β, test)."""
    jobs = [
        (p, ia, ib, it)
        for p in config.p
        for ia in range(len(config.alpha))
        for ib in range(len(config.beta))
        for it in range(len(config.tests))
    ]

    def work(job):
        cell = run_cell(config, *job)
        if on_cell is not None:
            on_cell(cell)
        return cell

    cells = sorted(parallel_map(work, jobs, threads), key=lambda c: c.key)
    annotations = []
    for p in sorted(set(config.p)):
        for alpha in sorted(set(config.alpha)):
            for beta in sorted(set(config.beta)):
                k = sweep_k(p, alpha)
                annotations.append({
                    "p": p, "alpha": alpha, "beta": beta, "k": k,
                    "boundaries": detection_boundaries(p, k, p ** (-beta)),
                    "estimation_hardness": hardness_annotation(k, p, config.delta),
                })
    return SweepReport(config, cells, annotations)


CSV_FIELDS = [
    "p", "alpha", "beta", "test", "k", "lambda", "regime", "status",
    "error", "error_ci_low", "error_ci_high", "type1", "type2", "analytic_bound",
]


def write_csv(report, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for c in report.cells:
            ok = c.status == "ok"
            ci = c.error_ci if ok else ("", "")
            writer.writerow([
                c.p, c.alpha, c.beta, c.test, c.k, repr(c.lam), c.regime, c.status,
                repr(c.error) if ok else "", repr(ci[0]) if ok else "", repr(ci[1]) if ok else "",
                repr(c.type1.point) if ok else "", repr(c.type2.point) if ok else "",
                repr(c.analytic_bound) if ok else "",
            ])


def plot_phase_diagram(report, path):
    """Three shaded regions and, per (α, β, test), a marker sized by the error at the largest p."""
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "subdetect"
    alphas = np.linspace(1e-3, 1 - 1e-3, 400)
    b_star = np.array([beta_star(a) for a in alphas])
    b_sharp = np.array([beta_sharp(a) for a in alphas])

    fig, ax = plt.subplots(figsize=(6, 5))
    ax.fill_between(alphas, 0, b_sharp, color=REGION_COLORS["easy"], label="poly-time easy")
    ax.fill_between(alphas, b_sharp, b_star, color=REGION_COLORS["hard"], label="hard under PC")
    ax.fill_between(alphas, b_star, 1, color=REGION_COLORS["impossible"], label="impossible")
    ax.plot(alphas, b_star, color="black", lw=1)
    ax.plot(alphas, b_sharp, color="black", lw=1, ls="--")

    p_max = max(report.config.p)
    for test in report.config.tests:
        cells = [c for c in report.cells if c.test == test and c.p == p_max and c.status == "ok"]
        if not cells:
            continue
        ax.scatter(
            [c.alpha + TEST_OFFSETS[test] for c in cells],
            [c.beta for c in cells],
            s=[20 + 180 * min(1.0, c.error) for c in cells],
            color=TEST_COLORS[test],
            edgecolors="black",
            linewidths=0.5,
            label=f"{test} (p={p_max})",
        )
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("alpha  (k = p^alpha)")
    ax.set_ylabel("beta  (lambda = p^-beta)")
    ax.legend(loc="upper left", fontsize=7)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_sweep_outputs(report, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.json", "w") as f:
        json.dump(report.to_dict(), f, indent=2)
    write_csv(report, out_dir / "sweep.csv")
    plot_phase_diagram(report, out_dir / "phase.svg")
    with open(out_dir / "timings.json", "w") as f:
        json.dump([{"key": list(c.key), "runtime": c.runtime} for c in report.cells], f, indent=2)
    return [out_dir / n for n in ("sweep.json", "sweep.csv", "phase.svg", "timings.json")]


def run_reduction_demo(p, k, lam, seed, trials=100, t=None, w=None, mode="auto", strict=True,
                       budget=DEFAULT_SCAN_BUDGET, c=DEFAULT_C, table_atoms_max=TABLE_ATOMS_MAX,
                       threads=1, on_phase=None):
    """Scan test composed with the discretized reduction on G(N, 1/2) and G(N, 1/2, κ).

    Also measures the scan test's own Type-I rate on the discretized null
    experiment with the same number of trials, for comparison.
    """
    params = choose_params(p, k, lam, t=t, w=w, strict=strict)
    if params.kappa > params.N:
        raise ParameterError(f"clique size kappa = {params.kappa} exceeds N = {params.N}; increase p or lower k")
    forecast = bit_budget(params)
    nbits = forecast.bits_consumed
    tau = thresholds(p, k, lam, c).scan
    say = on_phase or (lambda message: None)

    def composed(A, side, i):
        ledger = CoinLedger()
        coins = CoinStream.from_seed(seed, nbits, i, side)
        X = reduce_discrete(A, params, coins, ledger, mode=mode, table_atoms_max=table_atoms_max)
        return t_scan(X, k, budget).value > tau, ledger

    def null_trial(i):
        A = sample_er(params.N, make_rng(seed, i, 0))
        return composed(A, 0, i)

    def alt_trial(i):
        A = sample_planted(params.N, params.kappa, make_rng(seed, i, 1))
        rejected, ledger = composed(A, 1, i)
        return rejected, ledger, fold_report(A.planted, params.N, p, k).eventE

    def direct_trial(i):
        X = quantize_matrix(make_rng(seed, i, 2).standard_normal((p, p)), params.t)
        return t_scan(X, k, budget).value > tau

    say(f"null side: {trials} graphs G({params.N}, 1/2)")
    null = parallel_map(null_trial, range(trials), threads)
    say(f"alternative side: {trials} graphs G({params.N}, 1/2, {params.kappa})")
    alt = parallel_map(alt_trial, range(trials), threads)
    say("reference scan on discretized null matrices")
    direct = parallel_map(direct_trial, range(trials), threads)

    ledgers = [ledger for _, ledger in null] + [ledger for _, ledger, _ in alt]
    expected_bits = 2 * params.N2 * params.N2 * params.T
    type1 = MCEstimate.from_counts(sum(r for r, _ in null), trials)
    type2 = MCEstimate.from_counts(sum(not r for r, _, _ in alt), trials)
    reference = MCEstimate.from_counts(sum(direct), trials)
    event_misses = MCEstimate.from_counts(sum(not e for _, _, e in alt), trials)
    beta_parts = theorem_beta(p, k, discrete=True)
    return {
        "params": params.to_dict(),
        "trials": trials,
        "seed": seed,
        "c": c,
        "scan_threshold": tau,
        "type1": type1.to_dict(),
        "type2": type2.to_dict(),
        "reference_scan_type1": reference.to_dict(),
        "type1_slack": 5 / p,
        "type1_within_slack": type1.point <= reference.ci_high + 5 / p,
        "ledger": ledgers[0].to_dict(),
        "ledger_expected_bits": expected_bits,
        "ledger_consistent": all(l.bits_consumed == expected_bits for l in ledgers),
        "bit_budget": forecast.to_dict(),
        "event_E_miss_rate": event_misses.to_dict(),
        "event_E_bound": event_e_bound(k, p),
        "theorem_beta": beta_parts,
        "theorem_beta_continuous": theorem_beta(p, k, discrete=False),
        "analytic_scan_bound": min(1.0, error_bounds(p, k, lam, c).bound("scan")),
        "composed_bound": min(1.0, error_bounds(p, k, lam, c).bound("scan") + beta_parts["beta"]),
    }
