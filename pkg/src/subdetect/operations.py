import json
import sys
from pathlib import Path

from .config import Config
from .detectors import apply_test, error_bounds, support_recovery_test, thresholds
from .errors import ParameterError
from .estimators import (
    default_level,
    hardness_annotation,
    minimax_rate,
    risk_estimate,
    threshold_project,
)
from .matrixio import read_graph, read_matrix, write_csv, write_graph, write_matrix
from .model import as_array, make_mean_matrix, theorem1_bound
from .oracles import verify_suite
from .plantedclique import fold_report, sample_er, sample_planted
from .reduction import (
    CoinLedger,
    CoinStream,
    bit_budget,
    choose_params,
    reduce_continuous,
    reduce_discrete,
    theorem_beta,
)
from .sweep import SweepConfig, run_reduction_demo, run_sweep, write_sweep_outputs
from .utils import make_rng, report

VERIFY_FAILED = 2


def load_config(args):
    config = Config(args.config)
    config.override(seed=args.seed, threads=args.threads, out_dir=args.out_dir)
    return config


def out_path(config, name):
    path = Path(name)
    if path.parent == Path("."):
        out_dir = Path(config.get("out_dir"))
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / path
    return path


def emit(result, path=None):
    text = json.dumps(result, indent=2)
    if path is not None:
        with open(path, "w") as f:
            f.write(text + "\n")
    print(text)


def parse_auto(value):
    return None if value in (None, "auto") else int(value)


def parse_labels(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ParameterError(f"cannot parse index list {text!r}") from e


def cmd_pc_gen(args):
    config = load_config(args)
    rng = make_rng(config.get("seed"), args.N, args.kappa)
    if args.kappa:
        A = sample_planted(args.N, args.kappa, rng)
    else:
        A = sample_er(args.N, rng)
    path = out_path(config, args.output)
    write_graph(path, A)
    emit({
        "graph": str(path), "N": A.N, "kappa": args.kappa, "edges": A.edge_count,
        "planted": sorted(A.planted) if A.planted else [],
    })


def cmd_reduce(args):
    config = load_config(args)
    A = read_graph(args.graph)
    params = choose_params(args.p, args.k, args.lam, t=parse_auto(args.t), w=parse_auto(args.w),
                           strict=not args.no_strict)
    if A.N != params.N:
        raise ParameterError(f"graph has N = {A.N}, but (p, k, lambda) needs N = {params.N}")
    seed = config.get("seed")

    certificate = {"params": params.to_dict(), "mode": args.mode, "seed": seed}
    if args.mode == "continuous":
        X = reduce_continuous(A, params.pair(), params, make_rng(seed, 0xB0))
    else:
        ledger = CoinLedger()
        forecast = bit_budget(params)
        coins = CoinStream.from_seed(seed, forecast.bits_consumed)
        X = reduce_discrete(A, params, coins, ledger, mode=args.q_mode, threads=config.get("threads"),
                           table_atoms_max=config.get("table_atoms_max"))
        certificate["ledger"] = ledger.to_dict()
        certificate["bit_budget"] = forecast.to_dict()
        certificate["theorem1_bound"] = theorem1_bound(params.p, params.t)
    certificate["theorem_beta"] = theorem_beta(params.p, params.k, discrete=args.mode == "discrete")
    if A.planted:
        certificate["fold"] = fold_report(A.planted, params.N, params.p, params.k).to_dict()

    path = out_path(config, args.output)
    write_matrix(path, X, seed)
    if args.csv:
        write_csv(out_path(config, args.csv), X)
    certificate["matrix"] = str(path)
    emit(certificate, path.with_suffix(".json"))


def cmd_detect(args):
    config = load_config(args)
    X, _ = read_matrix(args.input)
    c = args.c if args.c is not None else config.get("c")
    budget = config.get("scan_budget")
    p = as_array(X).shape[0]
    result = {"input": args.input, "test": args.test, "k": args.k, "lambda": args.lam, "c": c}
    if args.test == "support":
        if not args.support:
            raise ParameterError("the support test needs --support ROWS:COLS")
        rows, _, cols = args.support.partition(":")
        tau = thresholds(p, args.k, args.lam, c).scan
        outcome = support_recovery_test(X, parse_labels(rows), parse_labels(cols), tau)
    else:
        outcome = apply_test(args.test, X, args.k, args.lam, c, budget, config.get("threads"))
        result["analytic_error_bound"] = error_bounds(p, args.k, args.lam, c).bound(args.test)
    result.update(outcome.to_dict())
    emit(result)


def cmd_estimate(args):
    config = load_config(args)
    level = args.threshold if args.threshold is not None else config.get("threshold_level")
    q = float(args.q)

    if args.input:
        X, seed = read_matrix(args.input)
        theta_hat = threshold_project(X, args.k, level)
        path = out_path(config, args.output)
        write_matrix(path, theta_hat, seed)
        emit({"input": args.input, "output": str(path), "k": args.k,
              "level": level if level is not None else default_level(theta_hat.shape[0])})
        return

    if args.p is None or args.lam is None:
        raise ParameterError("risk estimation needs --p and --lambda (or --input to estimate one matrix)")
    labels = range(1, args.k + 1)
    theta = make_mean_matrix(args.p, labels, labels, args.lam)
    trials = args.trials or config.get("trials")
    risk = risk_estimate(lambda X: threshold_project(X, args.k, level), theta, q,
                         trials, config.get("seed"), config.get("threads"))
    rate = minimax_rate(args.p, args.k, q)
    emit({
        "p": args.p, "k": args.k, "lambda": args.lam, "q": q, "trials": trials,
        "risk": risk.to_dict(), "minimax_rate": rate, "risk_to_rate": risk.point / rate,
        "hardness_annotation": hardness_annotation(args.k, args.p, config.get("delta")),
    })


def cmd_sweep(args):
    config = load_config(args)
    if args.trials:
        config.override(trials=args.trials)
    sweep_config = SweepConfig.from_config(config)

    def on_cell(cell):
        detail = "budget-skipped" if cell.status != "ok" else f"error {cell.error:.3f}"
        report(f"p={cell.p} alpha={cell.alpha} beta={cell.beta} {cell.test}: {detail}")

    result = run_sweep(sweep_config, threads=config.get("threads"), on_cell=on_cell)
    files = write_sweep_outputs(result, config.get("out_dir"))
    for path in files:
        print(f"Wrote {path}")


def cmd_verify(args):
    config = load_config(args)

    def on_check(check):
        mark = "ok" if check["passed"] else "FAILED"
        report(f"{check['name']}: {check['value']:.6g} <= {check['bound']:.6g} {mark}")

    checks = verify_suite(seed=config.get("seed"), scale=args.scale, on_check=on_check)
    failed = [c["name"] for c in checks if not c["passed"]]
    emit({"checks": checks, "failed": failed}, out_path(config, "verify.json"))
    if failed:
        print(f"Error: {len(failed)} bound check(s) failed: {', '.join(failed)}", file=sys.stderr)
        sys.exit(VERIFY_FAILED)


def cmd_demo(args):
    config = load_config(args)
    result = run_reduction_demo(
        args.p, args.k, args.lam, config.get("seed"),
        trials=args.trials, t=parse_auto(args.t), w=parse_auto(args.w), mode=args.q_mode,
        strict=not args.no_strict, budget=config.get("scan_budget"), c=config.get("c"),
        table_atoms_max=config.get("table_atoms_max"),
        threads=config.get("threads"), on_phase=report,
    )
    emit(result, out_path(config, "demo.json"))
