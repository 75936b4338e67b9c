"""Best responses of customers and of the operator under a price schedule,
and the check that they reproduce the social optimum."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleRebalancing, MismatchedProvenance, UnboundedCustomerProblem
from .netgraph import ArcKind
from .pricing import PriceSchedule, road_imbalance
from .qpmodel import FlowSolution, QuadraticProgram, arc_operating_costs, solution_tag
from .qpsolver import SolveResult, SolverOptions, Status, solve
from .scenario import Scenario

# Bound on the auxiliary pickup/dropoff split, in multiples of the request
# rate. The road imbalance never exceeds the rate, so the bound leaves every
# split of it available and only removes the ray u, w -> inf, which is free
# when p_O + p_D = 0.
SPLIT_BOUND = 4.0


def _incidence(s: Scenario) -> sp.csr_matrix:
    """Node-arc matrix with +1 at the head and -1 at the tail."""
    net = s.network
    nA = net.n_arcs
    cols = np.arange(nA)
    return sp.csr_matrix((np.r_[np.ones(nA), -np.ones(nA)],
                          (np.r_[net.head, net.tail], np.r_[cols, cols])),
                         shape=(net.n_nodes, nA))


def customer_charges(s: Scenario, prices: PriceSchedule, flow: np.ndarray) -> float:
    """Pickup and dropoff charges of one flow, from positive parts of the
    road imbalance at each node."""
    x = road_imbalance(s, flow)
    return float(prices.origin_charges @ np.maximum(x, 0.0)
                 + prices.destination_charges @ np.maximum(-x, 0.0))


def customer_cost(s: Scenario, prices: PriceSchedule, flow: np.ndarray) -> float:
    """What one request pays for ``flow`` under the schedule: travel time,
    arc charges, fares, pickup and dropoff charges, plus the regularizer."""
    net, k = s.network, s.costs
    road = net.kind_mask(ArcKind.ROAD)
    transit = net.kind_mask(ArcKind.TRANSIT)
    arc_price = np.where(road, prices.amod_arc_charges, 0.0) + np.where(transit, prices.transit_fares, 0.0)
    return float((k.value_of_time * net.time + arc_price) @ flow
                 + k.regularization * flow @ flow + customer_charges(s, prices, flow))


def customer_best_response(s: Scenario, prices: PriceSchedule, m: int,
                           opts: Optional[SolverOptions] = None) -> np.ndarray:
    """Cheapest (regularized) routing of request ``m`` against the schedule.

    The positive parts in the pickup/dropoff charges are linearized with a
    split ``u - w`` of each road node's net outflow; with ``p_O + p_D >= 0``
    the split is tight at the optimum.
    """
    net, k = s.network, s.costs
    req = s.requests[m]
    road_nodes = np.asarray(net.road_nodes, dtype=np.int64)
    pO = prices.origin_charges[road_nodes]
    pD = prices.destination_charges[road_nodes]
    if np.any(pO + pD < -1e-9):
        raise UnboundedCustomerProblem("pickup plus dropoff charge is negative at some node")
    nA, nR, nV = net.n_arcs, len(road_nodes), net.n_nodes
    road = net.kind_mask(ArcKind.ROAD)
    transit = net.kind_mask(ArcKind.TRANSIT)

    arc_price = np.where(road, prices.amod_arc_charges, 0.0) + np.where(transit, prices.transit_fares, 0.0)
    arc_cost = k.value_of_time * net.time + arc_price
    # pickup/dropoff charges telescope around any cycle, so a negative
    # cycle needs a negative arc cost somewhere
    if np.any(arc_cost < 0):
        raise UnboundedCustomerProblem("negative generalized arc cost admits a profitable cycle")
    c = np.concatenate([arc_cost, pO, pD])
    Q = sp.diags(np.r_[np.full(nA, 2.0 * k.regularization), np.zeros(2 * nR)], format="csr")

    E = _incidence(s)
    bal = sp.hstack([E, sp.csr_matrix((nV, 2 * nR))])
    b = np.zeros(nV)
    b[req.origin] = -req.rate
    b[req.destination] = req.rate
    # u - w - (road out - road in) = 0, i.e. u - w + (road part of E) = 0
    E_road = (E @ sp.diags(road.astype(float)))[road_nodes]
    I = sp.identity(nR, format="csr")
    split = sp.hstack([E_road, I, -I])
    A_eq = sp.vstack([bal, split], format="csr")
    b_eq = np.r_[b, np.zeros(nR)]
    A_in = sp.hstack([sp.csr_matrix((nR, nA)), I, I], format="csr")
    b_in = np.full(nR, SPLIT_BOUND * req.rate)
    qp = QuadraticProgram(Q, c, A_eq, b_eq, A_in, b_in, np.zeros(nA + 2 * nR))
    res = solve(qp, opts)
    if res.status == Status.INFEASIBLE:
        raise UnboundedCustomerProblem(f"request {m} cannot be routed")
    if not res.optimal:
        raise UnboundedCustomerProblem(f"best response for request {m} did not converge: {res.message}")
    return res.x[:nA]


def operator_best_response(s: Scenario, tolls: np.ndarray, customer_road_flow: np.ndarray,
                           opts: Optional[SolverOptions] = None) -> np.ndarray:
    """Cheapest rebalancing that restores vehicle balance for fixed customer
    road flows, paying operating cost plus toll per vehicle trip."""
    net, k = s.network, s.costs
    road_arcs = np.asarray(net.road_arcs, dtype=np.int64)
    road_nodes = np.asarray(net.road_nodes, dtype=np.int64)
    vehicle_cost, _ = arc_operating_costs(s)
    c = vehicle_cost[road_arcs] + tolls[road_arcs]
    nRA = len(road_arcs)
    Q = sp.diags(np.full(nRA, 2.0 * k.regularization), format="csr")
    E = _incidence(s)[road_nodes][:, road_arcs]
    # inflow - outflow of rebalancing = outflow - inflow of customers
    b = road_imbalance(s, customer_road_flow)[road_nodes]
    qp = QuadraticProgram(Q, c, E, b, sp.csr_matrix((0, nRA)), np.zeros(0), np.zeros(nRA))
    res = solve(qp, opts)
    if res.status == Status.INFEASIBLE:
        raise InfeasibleRebalancing("customer flows cannot be rebalanced on the road layer")
    if not res.optimal:
        raise InfeasibleRebalancing(f"operator problem did not converge: {res.message}")
    f0 = np.zeros(net.n_arcs)
    f0[road_arcs] = res.x
    return f0


@dataclass(frozen=True)
class EquilibriumReport:
    equilibrium: bool
    tol: float
    kkt_tol: float
    customer_max_dev: tuple[float, ...]
    customer_l2_dev: tuple[float, ...]
    operator_max_dev: float
    operator_l2_dev: float
    customer_kkt: tuple[float, ...]
    operator_kkt: float
    notes: tuple[str, ...] = field(default=())

    @property
    def worst_deviation(self) -> float:
        return max(max(self.customer_max_dev, default=0.0), self.operator_max_dev)

    def as_dict(self) -> dict:
        return {"equilibrium": self.equilibrium, "tol": self.tol, "kkt_tol": self.kkt_tol,
                "customer_max_dev": list(self.customer_max_dev),
                "customer_l2_dev": list(self.customer_l2_dev),
                "operator_max_dev": self.operator_max_dev,
                "operator_l2_dev": self.operator_l2_dev,
                "customer_kkt": list(self.customer_kkt), "operator_kkt": self.operator_kkt,
                "notes": list(self.notes)}


def customer_kkt_residual(s: Scenario, prices: PriceSchedule, m: int, flow: np.ndarray) -> float:
    """Stationarity of request ``m``'s routing against the social
    potentials: equality on arcs carrying flow, nonnegative reduced cost
    elsewhere."""
    net, k = s.network, s.costs
    lam = prices.customer_potentials[m]
    road = net.kind_mask(ArcKind.ROAD)
    transit = net.kind_mask(ArcKind.TRANSIT)
    pO = prices.origin_charges
    red = (k.value_of_time * net.time + lam[net.head] - lam[net.tail]
           + 2.0 * k.regularization * flow
           + np.where(road, pO[net.tail] - pO[net.head] + prices.amod_arc_charges, 0.0)
           + np.where(transit, prices.transit_fares, 0.0))
    active = flow > 1e-6 * s.requests[m].rate
    return float(np.max(np.where(active, np.abs(red), np.maximum(-red, 0.0)), initial=0.0))


def operator_kkt_residual(s: Scenario, prices: PriceSchedule, f0: np.ndarray,
                          threshold: float) -> float:
    net, k = s.network, s.costs
    road = net.road_arcs
    vehicle_cost, _ = arc_operating_costs(s)
    pD = prices.destination_charges
    red = (vehicle_cost[road] + prices.road_tolls[road] + pD[net.head[road]] - pD[net.tail[road]]
           + 2.0 * k.regularization * f0[road])
    active = f0[road] > threshold
    return float(np.max(np.where(active, np.abs(red), np.maximum(-red, 0.0)), initial=0.0))


def verify_equilibrium(s: Scenario, social: FlowSolution, result: SolveResult,
                       prices: PriceSchedule, tol: float = 1e-4, kkt_tol: Optional[float] = None,
                       opts: Optional[SolverOptions] = None, jobs: int = 1) -> EquilibriumReport:
    """Solve every agent's problem under ``prices`` and compare with the
    social flows.

    Flow deviations are max-norm differences relative to ``max(1, rate)``
    for customers and ``max(1, max social flow)`` for the operator; the L2
    variants use the flow norm instead. Stationarity residuals are checked
    against ``kkt_tol`` (defaults to ``tol``).
    """
    if not (social.tag == prices.tag == solution_tag(result.x)):
        raise MismatchedProvenance("flows, prices and solve result are not one chain")
    opts = opts or SolverOptions()
    kkt_tol = tol if kkt_tol is None else kkt_tol
    M = len(s.requests)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            responses = list(ex.map(lambda m: customer_best_response(s, prices, m, opts), range(M)))
    else:
        responses = [customer_best_response(s, prices, m, opts) for m in range(M)]

    cmax, cl2, ckkt = [], [], []
    for m, f in enumerate(responses):
        soc = social.customer[m]
        d = f - soc
        scale = max(1.0, s.requests[m].rate)
        cmax.append(float(np.max(np.abs(d)) / scale))
        cl2.append(float(np.linalg.norm(d) / max(scale, float(np.linalg.norm(soc)))))
        ckkt.append(customer_kkt_residual(s, prices, m, soc))

    road = s.network.kind_mask(ArcKind.ROAD)
    cust_road = np.where(road, social.customer.sum(axis=0), 0.0)
    f0 = operator_best_response(s, prices.road_tolls, cust_road, opts)
    d0 = f0 - social.rebalancing
    scale0 = max(1.0, float(np.max(np.abs(social.rebalancing), initial=0.0)))
    omax = float(np.max(np.abs(d0), initial=0.0) / scale0)
    ol2 = float(np.linalg.norm(d0) / max(scale0, float(np.linalg.norm(social.rebalancing))))
    max_rate = max(r.rate for r in s.requests)
    okkt = operator_kkt_residual(s, prices, social.rebalancing, 1e-6 * max_rate)

    ok = (max(cmax) <= tol and omax <= tol and max(ckkt) <= kkt_tol and okkt <= kkt_tol)
    return EquilibriumReport(ok, tol, kkt_tol, tuple(cmax), tuple(cl2), omax, ol2,
                             tuple(ckkt), okkt)
