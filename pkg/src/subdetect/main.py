import argparse
import sys
import warnings

from .errors import BudgetExceeded, SubdetectError
from .operations import (
    cmd_pc_gen, cmd_reduce, cmd_detect, cmd_estimate,
    cmd_sweep, cmd_verify, cmd_demo
)

BUDGET_EXHAUSTED = 3


def show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"Warning: {message}", file=sys.stderr)


def add_reduction_args(parser):
    parser.add_argument("--p", type=int, required=True, help="Target matrix size")
    parser.add_argument("--k", type=int, required=True, help="Submatrix size")
    parser.add_argument("--lambda", dest="lam", type=float, required=True, help="Signal level")
    parser.add_argument("--t", default="auto", help="Output precision in bits (auto or INT)")
    parser.add_argument("--w", default="auto", help="Atom grid precision in bits (auto or INT)")
    parser.add_argument("--q-mode", choices=["auto", "table", "lazy"], default="auto",
                        help="How the dyadic distributions are evaluated")
    parser.add_argument("--no-strict", action="store_true",
                        help="Warn instead of failing on p < 40k or a large lambda")


def build_parser():
    parser = argparse.ArgumentParser(description="Submatrix detection and the planted clique reduction (subdetect)")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--threads", type=int, help="Worker threads")
    parser.add_argument("--out-dir", help="Directory for output files")
    parser.add_argument("--config", help="Config file (default: config.yaml)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Planted clique graphs
    p_gen = subparsers.add_parser("pc-gen", help="Sample G(N, 1/2) or G(N, 1/2, kappa)")
    p_gen.add_argument("--N", type=int, required=True, help="Number of vertices")
    p_gen.add_argument("--kappa", type=int, default=0, help="Planted clique size (0 for none)")
    p_gen.add_argument("--output", default="graph.txt", help="Edge list, or packed if .bin/.smdg")

    # Reduction
    p_reduce = subparsers.add_parser("reduce", help="Map a graph to a p×p matrix")
    p_reduce.add_argument("--graph", required=True, help="Graph file")
    add_reduction_args(p_reduce)
    p_reduce.add_argument("--mode", choices=["continuous", "discrete"], default="discrete")
    p_reduce.add_argument("--output", default="reduced.smdx", help="Matrix file")
    p_reduce.add_argument("--csv", help="Also export the matrix as CSV")

    # Detection
    p_detect = subparsers.add_parser("detect", help="Run a test on a matrix file")
    p_detect.add_argument("--input", required=True, help="Matrix file")
    p_detect.add_argument("--test", choices=["lin", "scan", "max", "support"], required=True)
    p_detect.add_argument("--k", type=int, required=True, help="Submatrix size")
    p_detect.add_argument("--lambda", dest="lam", type=float, required=True, help="Signal level")
    p_detect.add_argument("--c", type=float, help="Threshold constant")
    p_detect.add_argument("--support", help="Estimated support as ROWS:COLS, e.g. 1,2,3:4,5,6")

    # Estimation
    p_est = subparsers.add_parser("estimate", help="Thresholding estimator and its Schatten risk")
    p_est.add_argument("--k", type=int, required=True, help="Sparsity")
    p_est.add_argument("--q", default="2", help="Schatten exponent (inf allowed)")
    p_est.add_argument("--threshold", type=float, help="Hard threshold level")
    p_est.add_argument("--input", help="Matrix file to estimate from")
    p_est.add_argument("--output", default="estimate.smdx", help="Estimate matrix file")
    p_est.add_argument("--p", type=int, help="Matrix size for risk estimation")
    p_est.add_argument("--lambda", dest="lam", type=float, help="Signal level for risk estimation")
    p_est.add_argument("--trials", type=int, help="Monte Carlo trials")

    # Sweep
    p_sweep = subparsers.add_parser("sweep", help="Phase-diagram sweep from the config grids")
    p_sweep.add_argument("--trials", type=int, help="Trials per cell")

    # Verify
    p_verify = subparsers.add_parser("verify", help="Check the numerical bounds")
    p_verify.add_argument("--scale", type=float, default=1.0, help="Scale of the Monte Carlo checks")

    # Demo
    p_demo = subparsers.add_parser("demo", help="Scan test composed with the discretized reduction")
    add_reduction_args(p_demo)
    p_demo.add_argument("--trials", type=int, default=100, help="Graphs per hypothesis")

    return parser


COMMANDS = {
    "pc-gen": cmd_pc_gen,
    "reduce": cmd_reduce,
    "detect": cmd_detect,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "demo": cmd_demo,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    warnings.showwarning = show_warning
    try:
        COMMANDS[args.command](args)
    except BudgetExceeded as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(BUDGET_EXHAUSTED)
    except SubdetectError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
