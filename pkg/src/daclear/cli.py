"""Command-line entry points: clear, verify, oracle."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .core import (
    Instance,
    PriceVector,
    PrimalSolution,
    clearing_residuals,
    welfare_of,
)
from .cuts import curtailment_violations
from .driver import ClearOptions, ClearingResult, clear_exact, clear_heuristic
from .errors import (
    IterationLimit,
    ModelError,
    SchemaError,
    TooLarge,
    ValidationError,
)
from .verify import check_bid_prices, check_filling, check_flow_price, oracle_clear

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3
EXIT_INPUT = 4


def _load_instance(path: str) -> Instance:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError("$", f"cannot read {path}: {exc.strerror}") from None
    return io.parse_instance(text)


def _result_doc(instance: Instance, result: ClearingResult) -> dict:
    if result.solution is None:
        return {
            "selection": None, "delta": None, "flows": None, "prices": None,
            "status": result.status, "mode": result.mode,
            "welfare": result.welfare, "bound": result.bound, "gap": result.gap,
            "prbs": [], "warnings": list(result.warnings), "iterations": [],
        }
    return io.solution_to_doc(
        instance,
        result.solution,
        result.prices,
        status=result.status,
        mode=result.mode,
        welfare=result.welfare,
        bound=result.bound,
        gap=result.gap,
        prbs=[list(p) for p in result.prbs],
        warnings=list(result.warnings),
        iterations=[
            {
                "master_objective": rec.master_objective,
                "loss_blocks": list(rec.loss_blocks),
                "loss_flex": [list(x) for x in rec.loss_flex],
                "curtailment_areas": [list(x) for x in rec.curtailment_areas],
                "cuts_added": rec.cuts_added,
            }
            for rec in result.iterations
        ],
    )


def _emit(doc: dict, out: str | None) -> None:
    text = io.dump_document(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_clear(args) -> int:
    instance = _load_instance(args.instance)
    options = ClearOptions(abs_gap=args.abs_gap, time_limit=args.time_limit)
    solver = clear_exact if args.mode == "exact" else clear_heuristic
    try:
        result = solver(instance, options)
    except IterationLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    if result.status == "infeasible":
        print("error: no feasible clearing exists under the given cuts", file=sys.stderr)
        return EXIT_INFEASIBLE
    _emit(_result_doc(instance, result), args.out)
    return EXIT_LIMIT if result.status == "limit" else EXIT_OK


def _cmd_oracle(args) -> int:
    instance = _load_instance(args.instance)
    result = oracle_clear(instance)
    _emit(_result_doc(instance, result), args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    instance = _load_instance(args.instance)
    try:
        text = Path(args.solution).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError("$", f"cannot read {args.solution}: {exc.strerror}") from None
    selection, delta, flows, price_map = io.parse_solution(text)
    solution = PrimalSolution(selection=selection, delta=delta, flows=flows)
    if price_map is None:
        raise SchemaError("$.prices", "verification needs prices")
    prices = PriceVector(pi=price_map)

    residuals = clearing_residuals(instance, solution)
    balance = max(abs(v) for v in residuals.values())
    filling = check_filling(instance, delta, prices, tol=args.tol)
    flow = check_flow_price(instance, flows, prices, tol=args.tol)
    bids = check_bid_prices(instance, selection, prices, tol=args.tol)
    curt = curtailment_violations(instance, solution)
    doc = {
        "pass": (
            balance <= args.tol
            and filling.passed
            and flow.passed
            and bids.passed
            and not curt
        ),
        "clearing_balance_residual": balance,
        "filling": _report_doc(filling),
        "flow_price": _report_doc(flow),
        "bid_prices": _report_doc(bids),
        "curtailment_priority": {
            "pass": not curt,
            "violations": [
                {"area": a, "hour": t, "blocks": list(s.blocks),
                 "flex": [list(x) for x in s.flex]}
                for (a, t), s in sorted(curt.items())
            ],
        },
        "welfare": welfare_of(instance, solution),
    }
    _emit(doc, getattr(args, "out", None))
    return EXIT_OK


def _report_doc(report) -> dict:
    return {
        "pass": report.passed,
        "violations": [
            {"location": list(v.location), "amount": v.amount, "condition": v.condition}
            for v in report.violations
        ],
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daclear",
        description="Day-ahead market clearing with linear price guarantees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_clear = sub.add_parser("clear", help="clear an instance")
    p_clear.add_argument("--instance", required=True)
    p_clear.add_argument("--mode", choices=("heuristic", "exact"), default="exact")
    p_clear.add_argument("--time-limit", type=float, default=None)
    p_clear.add_argument("--abs-gap", type=float, default=1e-9)
    p_clear.add_argument("--out", default=None)
    p_clear.set_defaults(func=_cmd_clear)

    p_verify = sub.add_parser("verify", help="check a solution document")
    p_verify.add_argument("--instance", required=True)
    p_verify.add_argument("--solution", required=True)
    p_verify.add_argument("--tol", type=float, default=1e-6)
    p_verify.add_argument("--out", default=None)
    p_verify.set_defaults(func=_cmd_verify)

    p_oracle = sub.add_parser("oracle", help="brute-force clearing of a small instance")
    p_oracle.add_argument("--instance", required=True)
    p_oracle.add_argument("--out", default=None)
    p_oracle.set_defaults(func=_cmd_oracle)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (SchemaError, ValidationError, TooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())
