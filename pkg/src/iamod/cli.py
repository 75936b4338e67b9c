"""Command-line entry point: generate, solve, price, verify, sweep, report.

Artifacts are JSON files. Every one of them records the content hash of the
scenario it was computed from, and downstream commands refuse inputs whose
hashes (or solve tags) disagree.

Exit codes: 0 success, 1 usage or input error, 2 infeasible, 3 verification
failure, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .equilibrium import verify_equilibrium
from .errors import IAMoDError, MismatchedProvenance, NumericalBreakdown, SchemaError
from .generator import TransitLine, grid_scenario
from .metrics import VARIANTS, compute_metrics, sweep
from .pricing import (derive_prices, load_prices, prices_to_dict, trip_toll_summary,
                      write_price_csv)
from .qpmodel import FlowSolution, assemble, extract_flows
from .qpsolver import ResidualReport, SolveResult, SolverOptions, Status, solve
from .scenario import load_scenario, save_scenario, scenario_hash

log = logging.getLogger("iamod")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_VERIFY, EXIT_NUMERICAL = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _csv_variants(text: str) -> list[str]:
    out = [t.strip() for t in text.split(",") if t.strip()]
    bad = [v for v in out if v not in VARIANTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown variant(s) {bad}; choose from {list(VARIANTS)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iamod", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(q):
        q.add_argument("--tol", type=float, default=1e-8)
        q.add_argument("--max-iter", type=int, default=200)
        q.add_argument("--seed", type=int, default=None,
                       help="randomize the interior-point starting point")

    g = sub.add_parser("generate", help="write a synthetic grid scenario")
    g.add_argument("--rows", type=int, default=5)
    g.add_argument("--cols", type=int, default=5)
    g.add_argument("--block", type=float, default=200.0, help="block length in meters")
    g.add_argument("--transit", default=None,
                   help="comma-separated lines like row:2,col:3:1 (default: middle row and column)")
    g.add_argument("--requests", type=int, default=8)
    g.add_argument("--seed", type=int, default=0, help="demand seed")
    g.add_argument("--label", default=None)
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="solve the social optimum")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    solver_flags(s)

    pr = sub.add_parser("price", help="derive the price schedule from a solution")
    pr.add_argument("--scenario", required=True)
    pr.add_argument("--solution", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--csv", default=None, help="prefix for <prefix>_arcs.csv and <prefix>_nodes.csv")

    v = sub.add_parser("verify", help="check the equilibrium property")
    v.add_argument("--scenario", required=True)
    v.add_argument("--solution", required=True)
    v.add_argument("--prices", required=True)
    v.add_argument("--out", default=None)
    v.add_argument("--eq-tol", type=float, default=1e-4, help="relative flow deviation tolerance")
    v.add_argument("--jobs", type=int, default=1)
    solver_flags(v)

    w = sub.add_parser("sweep", help="road-capacity sweep over system variants")
    w.add_argument("--scenario", required=True)
    w.add_argument("--out", required=True, help=".csv, .json or .dat (gnuplot)")
    w.add_argument("--fractions", type=_csv_floats,
                   default=[round(0.10 - 0.01 * k, 2) for k in range(11)])
    w.add_argument("--variants", type=_csv_variants, default=list(VARIANTS))
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--no-verify", action="store_true", help="skip equilibrium checks")
    w.add_argument("--eq-tol", type=float, default=1e-4)
    solver_flags(w)

    r = sub.add_parser("report", help="summarize a solution (and its prices)")
    r.add_argument("--scenario", required=True)
    r.add_argument("--solution", required=True)
    r.add_argument("--prices", default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--include-regularization", action="store_true",
                   help="include the quadratic regularizer in the reported cost")
    return p


# --------------------------------------------------------------- artifacts

def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _read_json(path, kind: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from None
    if not isinstance(data, dict) or data.get("format") != kind:
        raise SchemaError(f"{path}: not an {kind} file")
    return data


def solution_payload(s_hash: str, res: SolveResult, flows: Optional[FlowSolution]) -> dict:
    out = {"format": "iamod-solution", "scenario_hash": s_hash, "status": res.status.value,
           "iterations": res.iterations, "polished": res.polished, "message": res.message,
           "residuals": res.residuals.as_dict(),
           "x": res.x.tolist(), "y": res.y.tolist(), "z": res.z.tolist(), "w": res.w.tolist()}
    if flows is not None:
        b = flows.breakdown
        out.update(tag=flows.tag, objective=flows.objective,
                   cost_breakdown={"time": b.time, "amod_operating": b.amod_operating,
                                   "transit_operating": b.transit_operating,
                                   "regularization": b.regularization},
                   customer_flows=flows.customer.tolist(),
                   rebalancing_flows=flows.rebalancing.tolist())
    if res.certificate is not None:
        c = res.certificate
        out["certificate"] = {"u": c.u.tolist(), "v": c.v.tolist(),
                              "violated_eq": list(c.violated_eq),
                              "violated_in": list(c.violated_in),
                              "phase1_value": c.phase1_value}
    return out


def _load_chain(args, want_prices: bool):
    s = load_scenario(args.scenario)
    h = scenario_hash(s)
    sol = _read_json(args.solution, "iamod-solution")
    if sol.get("scenario_hash") != h:
        raise MismatchedProvenance("solution was computed from a different scenario")
    if sol["status"] != Status.OPTIMAL.value:
        raise MismatchedProvenance(f"solution has status {sol['status']}, not optimal")
    r = sol["residuals"]
    res = SolveResult(np.asarray(sol["x"]), np.asarray(sol["y"]), np.asarray(sol["z"]),
                      np.asarray(sol["w"]), Status(sol["status"]),
                      ResidualReport(r["primal_feas"], r["dual_feas"], r["comp_slack"],
                                     r["duality_gap"]),
                      sol["iterations"], sol.get("polished", False))
    qp, idx = assemble(s)
    if qp.n != len(res.x):
        raise MismatchedProvenance("solution does not match the scenario dimensions")
    flows = extract_flows(qp, idx, res.x, s)
    if flows.tag != sol.get("tag"):
        raise MismatchedProvenance("solution flows do not match their recorded tag")
    prices = None
    if want_prices and getattr(args, "prices", None):
        pdata = _read_json(args.prices, "iamod-prices")
        if pdata.get("scenario_hash") != h:
            raise MismatchedProvenance("prices were computed from a different scenario")
        prices = load_prices(args.prices)
        if prices.tag != flows.tag:
            raise MismatchedProvenance("prices come from a different solve")
    return s, h, qp, idx, res, flows, prices


# ---------------------------------------------------------------- commands

def _solver_options(args) -> SolverOptions:
    return SolverOptions(tol=args.tol, max_iter=args.max_iter, seed=args.seed)


def cmd_generate(args) -> int:
    lines = None if args.transit is None else [TransitLine.parse(t) for t in args.transit.split(",") if t]
    s = grid_scenario(args.rows, args.cols, args.block, lines, args.seed,
                      n_requests=args.requests, label=args.label)
    save_scenario(s, args.out)
    print(f"wrote {args.out}: {s.network.n_nodes} nodes, {s.network.n_arcs} arcs, "
          f"{len(s.requests)} requests ({scenario_hash(s)[:12]})")
    return EXIT_OK


def cmd_solve(args) -> int:
    s = load_scenario(args.scenario)
    qp, idx = assemble(s)
    res = solve(qp, _solver_options(args))
    flows = extract_flows(qp, idx, res.x, s) if res.optimal else None
    _write_json(args.out, solution_payload(scenario_hash(s), res, flows))
    rep = res.residuals
    print(f"status {res.status.value} after {res.iterations} iterations"
          f"{' (polished)' if res.polished else ''}")
    print(f"residuals: primal {rep.primal_feas:.2e} dual {rep.dual_feas:.2e} "
          f"comp {rep.comp_slack:.2e} gap {rep.duality_gap:.2e}")
    if res.status == Status.INFEASIBLE:
        cert = res.certificate
        if cert is not None:
            print(f"infeasible: phase-one value {cert.phase1_value:.6g}; violated balance rows "
                  f"{list(cert.violated_eq)[:10]}, capacity rows {list(cert.violated_in)[:10]}",
                  file=sys.stderr)
        return EXIT_INFEASIBLE
    if not res.optimal:
        print(f"solver failed: {res.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"objective {flows.objective:.10g} USD/h")
    return EXIT_OK


def cmd_price(args) -> int:
    s, h, qp, idx, res, flows, _ = _load_chain(args, want_prices=False)
    prices = derive_prices(res, s, idx)
    payload = {"format": "iamod-prices", "scenario_hash": h, **prices_to_dict(prices)}
    _write_json(args.out, payload)
    if args.csv:
        write_price_csv(prices, s, f"{args.csv}_arcs.csv", f"{args.csv}_nodes.csv")
    summary = trip_toll_summary(flows, prices, s)
    print(f"average toll {summary.average_toll:.6g} USD/trip, "
          f"average fare {summary.average_fare:.6g} USD/trip")
    return EXIT_OK


def cmd_verify(args) -> int:
    s, h, qp, idx, res, flows, prices = _load_chain(args, want_prices=True)
    rep = verify_equilibrium(s, flows, res, prices, tol=args.eq_tol,
                             opts=_solver_options(args), jobs=args.jobs)
    if args.out:
        _write_json(args.out, {"format": "iamod-equilibrium", "scenario_hash": h, **rep.as_dict()})
    print(f"equilibrium: {'PASS' if rep.equilibrium else 'FAIL'}")
    print(f"  worst customer deviation {max(rep.customer_max_dev):.3e}, "
          f"operator deviation {rep.operator_max_dev:.3e} (tol {rep.tol:g})")
    print(f"  worst customer stationarity {max(rep.customer_kkt):.3e}, "
          f"operator stationarity {rep.operator_kkt:.3e} (tol {rep.kkt_tol:g})")
    return EXIT_OK if rep.equilibrium else EXIT_VERIFY


def cmd_sweep(args) -> int:
    s = load_scenario(args.scenario)
    h = scenario_hash(s)
    opts = _solver_options(args)
    table = sweep(s, args.fractions, args.variants, jobs=args.jobs, opts=opts,
                  tol=args.eq_tol, verify=not args.no_verify)
    out = Path(args.out)
    if out.suffix == ".json":
        payload = json.loads(table.to_json())
        payload.update(format="iamod-sweep", scenario_hash=h)
        _write_json(out, payload)
    elif out.suffix == ".dat":
        out.write_text(f"# scenario {h}\n" + table.to_gnuplot(), encoding="utf-8")
    else:
        out.write_text(table.to_csv(), encoding="utf-8")
    failed = [r for r in table.rows if r.status != Status.OPTIMAL.value]
    for r in table.rows:
        m = r.metrics
        if m is None:
            print(f"{r.fraction:6.3f} {r.variant:6s} {r.status}: {r.error}")
        else:
            print(f"{r.fraction:6.3f} {r.variant:6s} cost {m.monetary_cost:10.3f} USD/h  "
                  f"time {m.avg_travel_time:7.1f} s  transit share {m.share_transit:.3f}  "
                  f"equilibrium {r.equilibrium}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_report(args) -> int:
    s, h, qp, idx, res, flows, prices = _load_chain(args, want_prices=True)
    if prices is None:
        prices = derive_prices(res, s, idx)
    m = compute_metrics(s, flows, prices)
    cost = m.cost(args.include_regularization)
    lines = [f"scenario {s.label or '(unlabeled)'} [{h[:12]}]",
             f"cost {cost:.6f} USD/h" + (" (with regularizer)" if args.include_regularization else ""),
             f"average travel time {m.avg_travel_time:.2f} s",
             "distance share: " + ", ".join(f"{k} {v:.4f}" for k, v in m.modal_share.items()),
             f"emissions {m.emissions:.6f} kg CO2/h",
             f"fleet size estimate {m.fleet_size_estimate:.3f} vehicles",
             f"average toll {m.avg_toll_per_trip:.6f} USD/trip"]
    print("\n".join(lines))
    if args.out:
        payload = {"format": "iamod-report", "scenario_hash": h, "tag": flows.tag,
                   "cost_usd_per_h": cost, "include_regularization": args.include_regularization,
                   "avg_travel_time_s": m.avg_travel_time, "modal_share": m.modal_share,
                   "emissions_kg_per_h": m.emissions, "fleet_size_estimate": m.fleet_size_estimate,
                   "avg_toll_usd": m.avg_toll_per_trip}
        _write_json(args.out, payload)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "price": cmd_price,
            "verify": cmd_verify, "sweep": cmd_sweep, "report": cmd_report}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"iamod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    for name in ("scenario", "solution", "prices"):
        path = getattr(args, name, None)
        if path and not Path(path).is_file():
            print(f"iamod: error: --{name} {path}: no such file", file=sys.stderr)
            return EXIT_USAGE
    out = getattr(args, "out", None)
    if out and not Path(out).resolve().parent.is_dir():
        print(f"iamod: error: --out {out}: directory does not exist", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except NumericalBreakdown as exc:
        print(f"iamod: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (IAMoDError, ValueError) as exc:
        print(f"iamod: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
