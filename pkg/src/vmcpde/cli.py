"""Command line interface: `vmc run` and `vmc bounds`.

`vmc run` drives the experiment pipeline and writes an error-curve CSV;
`vmc bounds` evaluates the concentration-based bound calculator and prints
a JSON report.  Run options can also come from a JSON config file whose
keys match the flag names; explicit flags override file values.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import error_bounds as eb
from .errors import (CapacityError, ConditioningError, EllipticityError,
                     NumericalBreakdownError, SingularSystemError,
                     UndefinedRelativeErrorError, UnsupportedDimensionError)
from .experiment import RunConfig, run_pipeline
from .param_field import PROBLEM_NAMES

_NUMERICAL_ERRORS = (EllipticityError, SingularSystemError, ConditioningError,
                     NumericalBreakdownError, CapacityError,
                     UndefinedRelativeErrorError, UnsupportedDimensionError,
                     np.linalg.LinAlgError, FloatingPointError)

_RUN_DEFAULTS = {
    "mesh-n": 32,
    "max-rank": 40,
    "seed": 0,
    "ref-samples": 100_000,
    "test-samples": 1000,
    "workers": 1,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmc",
        description="Tensor-train surrogates for parametric elliptic PDEs")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the sample/solve/reconstruct pipeline")
    run.add_argument("--config", type=str, default=None,
                     help="JSON file with keys matching the flag names")
    run.add_argument("--problem", type=str, choices=PROBLEM_NAMES)
    run.add_argument("--M", type=int)
    run.add_argument("--degree", type=int)
    run.add_argument("--mesh-n", type=int)
    run.add_argument("--samples", type=str,
                     help="comma-separated strictly increasing sample counts")
    run.add_argument("--max-rank", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--ref-samples", type=int)
    run.add_argument("--test-samples", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", type=str)

    bounds = sub.add_parser("bounds", help="evaluate the error bound calculator")
    bounds.add_argument("--dim", type=int, required=True)
    bounds.add_argument("--radius", type=float, required=True)
    bounds.add_argument("--C1", type=float, required=True)
    bounds.add_argument("--C2", type=float, required=True)
    bounds.add_argument("--Gamma", type=float)
    bounds.add_argument("--gamma", type=float)
    bounds.add_argument("--sigma2", type=float, default=0.0)
    bounds.add_argument("--eps", type=float, required=True)
    bounds.add_argument("--N", type=int, required=True)
    bounds.add_argument("--invert", action="store_true",
                        help="also report the smallest N reaching --pfail")
    bounds.add_argument("--pfail", type=float, default=None)
    bounds.add_argument("--concentration", type=str, default="hoeffding",
                        choices=("hoeffding", "bernstein"))
    bounds.add_argument("--Ebest", type=float, default=None,
                        help="best approximation error for the norm-error "
                             "and quasi-optimality sections")
    bounds.add_argument("--a", type=float, default=1.0,
                        help="quasi-optimality slack parameter")
    return parser


def _merge_run_options(args: argparse.Namespace) -> dict:
    """File values, overridden by explicit flags, overridden onto defaults."""
    options = dict(_RUN_DEFAULTS)
    if args.config is not None:
        with open(args.config) as fh:
            file_values = json.load(fh)
        if not isinstance(file_values, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in file_values.items():
            options[key] = value
    flag_map = {
        "problem": "problem", "M": "M", "degree": "degree",
        "mesh_n": "mesh-n", "samples": "samples", "max_rank": "max-rank",
        "seed": "seed", "ref_samples": "ref-samples",
        "test_samples": "test-samples", "workers": "workers", "out": "out",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr)
        if value is not None:
            options[key] = value
    return options


def _parse_schedule(raw) -> tuple[int, ...]:
    if isinstance(raw, str):
        parts = [p for p in raw.split(",") if p.strip()]
        return tuple(int(p) for p in parts)
    if isinstance(raw, (list, tuple)):
        return tuple(int(v) for v in raw)
    raise ValueError(f"cannot parse sample schedule from {raw!r}")


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        options = _merge_run_options(args)
        for required in ("problem", "M", "degree", "samples"):
            if options.get(required) is None:
                raise ValueError(f"missing required option {required!r}")
        config = RunConfig(
            problem=options["problem"],
            M=int(options["M"]),
            degree=int(options["degree"]),
            mesh_n=int(options["mesh-n"]),
            schedule=_parse_schedule(options["samples"]),
            max_rank=int(options["max-rank"]),
            seed=int(options["seed"]),
            ref_samples=int(options["ref-samples"]),
            test_samples=int(options["test-samples"]),
            workers=int(options["workers"]),
            out=options.get("out"),
        )
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2

    try:
        records = run_pipeline(config)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for record in records:
        print(record.csv_row())
    return 0


def _bound_dict(b: eb.ProbabilityBound) -> dict:
    return {"raw": b.raw, "clamped": b.clamped, "log_raw": b.log_raw}


def _cmd_bounds(args: argparse.Namespace) -> int:
    try:
        inputs = eb.BoundInputs(
            loss_bound=args.C1, lipschitz=args.C2, hessian_bound=args.Gamma,
            convexity=args.gamma, dim=args.dim, radius=args.radius,
            variance=args.sigma2, num_samples=args.N, accuracy=args.eps,
            best_error=args.Ebest)
        cover_eps = args.eps / (8.0 * args.C2)
        report = {
            "inputs": {
                "dim": args.dim, "radius": args.radius, "C1": args.C1,
                "C2": args.C2, "Gamma": args.Gamma, "gamma": args.gamma,
                "sigma2": args.sigma2, "eps": args.eps, "N": args.N,
                "concentration": args.concentration, "Ebest": args.Ebest,
            },
            "covering_number": {
                "eps_scaled": cover_eps,
                "log": eb.covering_number_log(args.dim, args.radius, cover_eps),
                "linear": eb.covering_number_linear(args.dim, args.radius,
                                                    cover_eps),
            },
            "delta": _bound_dict(
                eb.hoeffding_delta(args.eps / 4.0, args.N, args.C1)
                if args.concentration == "hoeffding"
                else eb.bernstein_delta(args.eps / 4.0, args.N, args.C1,
                                        args.sigma2)),
            "generalization_bound": _bound_dict(
                eb.generalization_bound(args.eps, args.N, inputs,
                                        args.concentration)),
            "negligible_variance_bernstein": {
                name: _bound_dict(b)
                for name, b in eb.negligible_variance_deltas(
                    args.eps / 4.0, args.N, args.C1).items()
            },
        }
        report["negligible_variance_bernstein"]["note"] = (
            "the 'printed' and 'derived' zero-variance forms disagree; "
            "'derived' is the sigma^2 -> 0 limit of the Bernstein bound")

        if args.invert:
            if args.pfail is None:
                raise ValueError("--invert requires --pfail")
            n_req = eb.samples_for_confidence(args.eps, args.pfail, inputs,
                                              args.concentration)
            report["required_samples"] = {
                "pfail": args.pfail, "N": n_req,
                "bound_at_N": eb.generalization_bound(
                    args.eps, n_req, inputs, args.concentration).clamped,
            }

        if args.Ebest is not None and args.Gamma is not None:
            lin, quad = eb.approx_error_bounds(args.Ebest, args.C2, args.Gamma)
            report["approximation_error"] = {"linear": lin, "quadratic": quad}
            if args.gamma is not None:
                report["norm_error_if_gen_below_eps"] = eb.norm_error_bound(
                    args.Ebest, args.eps, args.Gamma, args.gamma)
                factor, prob = eb.quasi_optimality(args.a, inputs,
                                                   args.concentration)
                report["quasi_optimality"] = {
                    "a": args.a, "factor": factor,
                    "validity_probability": prob,
                }
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

    print(json.dumps(report, indent=2))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_bounds(args)


if __name__ == "__main__":
    sys.exit(main())
