"""Pricing and tolling schedule read off the social optimum's multipliers.

Sign normalization happens here, once: the solver reports capacity
multipliers ``z >= 0`` and balance multipliers ``y`` entering the arc
stationarity as ``y(head) - y(tail)``, which is exactly the orientation the
toll and charge formulas use.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import MismatchedProvenance, NotOptimal
from .netgraph import ArcKind
from .qpmodel import FlowSolution, VariableIndex, arc_operating_costs, solution_tag
from .qpsolver import SolveResult, SolverOptions, solve
from .scenario import Scenario


@dataclass(frozen=True, eq=False)
class PriceSchedule:
    """Arc arrays are indexed by arc id and node arrays by node id; entries
    outside the relevant layer are zero."""
    transit_fares: np.ndarray  # p_P, USD per traversal
    transit_congestion: np.ndarray  # capacity multiplier inside p_P
    road_tolls: np.ndarray  # tau_R
    amod_arc_charges: np.ndarray  # p_R
    origin_charges: np.ndarray  # p_O
    destination_charges: np.ndarray  # p_D
    customer_potentials: np.ndarray  # (requests x nodes), diagnostics only
    tag: str = ""

    def perturbed(self, arc: int, factor: float) -> "PriceSchedule":
        """Copy with one road toll scaled (and its arc charge kept consistent)."""
        tolls = self.road_tolls.copy()
        charges = self.amod_arc_charges.copy()
        new = tolls[arc] * factor
        charges[arc] += new - tolls[arc]
        tolls[arc] = new
        return PriceSchedule(self.transit_fares, self.transit_congestion, tolls, charges,
                             self.origin_charges, self.destination_charges,
                             self.customer_potentials, self.tag)


def derive_prices(result: SolveResult, s: Scenario, idx: VariableIndex) -> PriceSchedule:
    if not result.optimal:
        raise NotOptimal(f"cannot price a solve with status {result.status.value}")
    net = s.network
    vehicle_cost, transit_cost = arc_operating_costs(s)
    nA, nV = net.n_arcs, net.n_nodes

    tolls = np.zeros(nA)
    for a in idx.road_arcs:
        tolls[a] = result.z[idx.road_capacity_row(a)]
    charges = np.where(net.kind_mask(ArcKind.ROAD), vehicle_cost + tolls, 0.0)

    congestion = np.zeros(nA)
    for a in idx.transit_arcs:
        congestion[a] = result.z[idx.transit_capacity_row(a)]
    fares = np.where(net.kind_mask(ArcKind.TRANSIT), transit_cost + congestion, 0.0)

    dest = np.zeros(nV)
    for j in idx.road_nodes:
        dest[j] = result.y[idx.vehicle_row(j)]
    origin = -dest
    potentials = result.y[: idx.n_requests * nV].reshape(idx.n_requests, nV).copy()
    return PriceSchedule(fares, congestion, tolls, charges, origin, dest, potentials,
                         solution_tag(result.x))


def road_imbalance(s: Scenario, flow: np.ndarray) -> np.ndarray:
    """Net road outflow (out - in) per node for one arc-flow vector."""
    net = s.network
    road = net.kind_mask(ArcKind.ROAD)
    f = np.where(road, flow, 0.0)
    out = np.bincount(net.tail, weights=f, minlength=net.n_nodes)
    inn = np.bincount(net.head, weights=f, minlength=net.n_nodes)
    return out - inn


@dataclass(frozen=True)
class TripSummary:
    average_toll: float  # USD per trip, demand weighted
    average_fare: float
    per_request_toll: tuple[float, ...]
    per_request_fare: dict  # component -> tuple per request, USD per trip

    def as_dict(self) -> dict:
        return {"average_toll_usd": self.average_toll, "average_fare_usd": self.average_fare,
                "per_request_toll_usd": list(self.per_request_toll),
                "per_request_fare_usd": {k: list(v) for k, v in self.per_request_fare.items()}}


def trip_toll_summary(flows: FlowSolution, prices: PriceSchedule, s: Scenario) -> TripSummary:
    """Tolls and fare components paid per trip under the schedule."""
    if flows.tag != prices.tag:
        raise MismatchedProvenance("flows and prices come from different solves")
    rates = np.array([r.rate for r in s.requests])
    road = s.network.kind_mask(ArcKind.ROAD)
    transit = s.network.kind_mask(ArcKind.TRANSIT)
    toll_paid = flows.customer[:, road] @ prices.road_tolls[road]
    comp = {"arc": flows.customer[:, road] @ prices.amod_arc_charges[road],
            "transit": flows.customer[:, transit] @ prices.transit_fares[transit],
            "origin": np.zeros(len(rates)), "destination": np.zeros(len(rates))}
    for m in range(len(rates)):
        x = road_imbalance(s, flows.customer[m])
        comp["origin"][m] = prices.origin_charges @ np.maximum(x, 0.0)
        comp["destination"][m] = prices.destination_charges @ np.maximum(-x, 0.0)
    total = sum(comp.values())
    return TripSummary(float(toll_paid.sum() / rates.sum()), float(total.sum() / rates.sum()),
                       tuple(float(t) for t in toll_paid / rates),
                       {k: tuple(float(t) for t in v / rates) for k, v in comp.items()})


def dual_spread(s: Scenario, results: Sequence[SolveResult], idx: VariableIndex) -> float:
    """Largest disagreement between the schedules of several solves of the
    same QP.

    Tolls and transit congestion charges are compared everywhere.
    Vehicle-balance multipliers are compared through their differences
    across road arcs that carry vehicles in the first solve: a constant
    shift is invisible to every agent, and on idle arcs the difference is
    only bounded, never used.
    """
    scheds = [derive_prices(r, s, idx) for r in results]
    net = s.network
    road = net.road_arcs
    customer, rebalancing = idx.unpack(results[0].x)
    vehicles = (customer.sum(axis=0) + rebalancing)[road]
    busy = road[vehicles > 1e-6 * max(r.rate for r in s.requests)]
    ref = scheds[0]
    d_ref = ref.destination_charges[net.head[busy]] - ref.destination_charges[net.tail[busy]]
    spread = 0.0
    for a in scheds[1:]:
        d_a = a.destination_charges[net.head[busy]] - a.destination_charges[net.tail[busy]]
        spread = max(spread,
                     float(np.max(np.abs(a.road_tolls - ref.road_tolls), initial=0.0)),
                     float(np.max(np.abs(a.transit_congestion - ref.transit_congestion), initial=0.0)),
                     float(np.max(np.abs(d_a - d_ref), initial=0.0)))
    return spread


def degenerate_duals(s: Scenario, qp, idx: VariableIndex, base: SolveResult,
                     seeds: Sequence[int] = (11, 23), threshold: float = 1e-4,
                     opts: Optional[SolverOptions] = None) -> bool:
    """Flag instances whose schedules move by more than ``threshold`` when
    the solve is restarted from randomized points."""
    opts = opts or SolverOptions()
    results = [base]
    for seed in seeds:
        r = solve(qp, replace(opts, seed=seed))
        if not r.optimal:
            return True
        results.append(r)
    return dual_spread(s, results, idx) > threshold


# ------------------------------------------------------------------ export

def prices_to_dict(p: PriceSchedule) -> dict:
    return {"tag": p.tag,
            "transit_fares": p.transit_fares.tolist(),
            "transit_congestion": p.transit_congestion.tolist(),
            "road_tolls": p.road_tolls.tolist(),
            "amod_arc_charges": p.amod_arc_charges.tolist(),
            "origin_charges": p.origin_charges.tolist(),
            "destination_charges": p.destination_charges.tolist(),
            "customer_potentials": p.customer_potentials.tolist()}


def prices_from_dict(d: dict) -> PriceSchedule:
    arr = {k: np.asarray(d[k], dtype=float) for k in
           ("transit_fares", "transit_congestion", "road_tolls", "amod_arc_charges",
            "origin_charges", "destination_charges", "customer_potentials")}
    return PriceSchedule(tag=d.get("tag", ""), **arr)


def write_price_csv(p: PriceSchedule, s: Scenario, arcs_path, nodes_path) -> None:
    net = s.network
    with open(arcs_path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["arc_id", "kind", "toll_usd", "fare_usd", "arc_charge_usd"])
        for k, a in enumerate(net.arcs):
            if a.kind == ArcKind.ROAD:
                out.writerow([k, a.kind.value, repr(float(p.road_tolls[k])), "",
                              repr(float(p.amod_arc_charges[k]))])
            elif a.kind == ArcKind.TRANSIT:
                out.writerow([k, a.kind.value, "", repr(float(p.transit_fares[k])), ""])
    with open(nodes_path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["node_id", "origin_charge_usd", "destination_charge_usd"])
        for j in net.road_nodes:
            out.writerow([int(j), repr(float(p.origin_charges[j])),
                          repr(float(p.destination_charges[j]))])


def save_prices(p: PriceSchedule, path) -> None:
    Path(path).write_text(json.dumps(prices_to_dict(p)) + "\n", encoding="utf-8")


def load_prices(path) -> PriceSchedule:
    return prices_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
