"""Command line: ``drccmdp solve --mode {individual|joint|mixture} --instance FILE|benchmark ...``.

Exit codes: 0 success, 2 infeasible, 3 numerical failure, 4 bad input.
Log verbosity comes from ``DRCCMDP_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .benchmark import KERNEL_CAVEAT, build_benchmark, load_kernel
from .distributions import DistributionError
from .experiments import BAD_INPUT, MODES, RunConfig, run_sweep
from .kl import KLDomainError
from .mdp import MdpValidationError
from .problem import load_problem
from .reformulate import ReformulationError

EXIT_OK, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_BAD_INPUT = 0, 2, 3, 4

log = logging.getLogger("drccmdp")

INFEASIBLE_STATUSES = {"infeasible", "infeasible-start", "empty-box"}


def _radii(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty radius list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drccmdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve at one radius or over a radius sweep")
    s.add_argument("--mode", choices=MODES, required=True)
    s.add_argument("--instance", required=True,
                   help="problem JSON file, or 'benchmark' for the machine-replacement instance")
    s.add_argument("--radius", type=float, help="KL radius used for every ball")
    s.add_argument("--sweep", type=_radii, help="comma-separated radii R1,R2,...")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--kernel", help="transition kernel JSON for the benchmark")
    s.add_argument("--epsilon", type=float,
                   help="confidence level (individual) or joint confidence (joint, mixture)")
    s.add_argument("--xi", type=float, help="threshold applied to every constraint")
    s.add_argument("--config", help="run configuration JSON (backend, workers, joint, mixture)")
    return p


def exit_code(statuses) -> int:
    statuses = set(statuses)
    if statuses <= {"optimal", "converged", "max-iterations"}:
        return EXIT_OK
    if BAD_INPUT in statuses:
        return EXIT_BAD_INPUT
    if statuses & INFEASIBLE_STATUSES:
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


def _load(args):
    caveat = None
    if args.instance == "benchmark":
        kernel = load_kernel(args.kernel) if args.kernel else None
        problem = build_benchmark(kernel)
        caveat = KERNEL_CAVEAT if kernel is None else f"user kernel {args.kernel}"
    else:
        if args.kernel:
            raise ValueError("--kernel applies only to --instance benchmark")
        problem = load_problem(args.instance)
    if args.xi is not None:
        problem = problem.with_threshold(args.xi)
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            cfg = RunConfig.from_dict(json.load(fh))
    if args.epsilon is not None:
        if args.mode == "individual":
            problem = problem.with_confidence(args.epsilon)
        else:
            d = cfg.joint.to_dict()
            d["eps_hat"] = args.epsilon
            joint = type(cfg.joint).from_dict(d)
            cfg = RunConfig(cfg.backend, cfg.workers, joint, cfg.mixture)
    return problem, cfg, caveat


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DRCCMDP_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which is the infeasible code here
        return EXIT_OK if exc.code in (0, None) else EXIT_BAD_INPUT
    if (args.radius is None) == (args.sweep is None):
        parser.print_usage(sys.stderr)
        print("drccmdp: give exactly one of --radius or --sweep", file=sys.stderr)
        return EXIT_BAD_INPUT
    radii = [args.radius] if args.sweep is None else args.sweep
    try:
        problem, cfg, caveat = _load(args)
        result = run_sweep(problem, args.mode, radii, args.out, cfg, caveat)
    except (OSError, ValueError, KeyError, TypeError, MdpValidationError, DistributionError,
            KLDomainError, ReformulationError) as exc:
        print(f"drccmdp: bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    for pt in result.manifest["points"]:
        print(f"radius={pt['radius']:<10g} status={pt['status']:<16} objective={pt['objective']}")
    return exit_code(p["status"] for p in result.manifest["points"])


if __name__ == "__main__":
    sys.exit(main())
