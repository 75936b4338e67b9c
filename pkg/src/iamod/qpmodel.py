"""Multi-commodity flow model as a sparse strictly convex QP.

Columns: one block of ``|A|`` customer flows per request, followed by one
rebalancing flow per road arc. Equality rows: customer balance per
(request, node), then vehicle balance per road node. Inequality rows: road
capacity per road arc, then transit capacity per transit arc.

Rows are written as ``inflow - outflow = rhs``; with the stationarity
convention ``Qx + c + A_eq' y + A_in' z - w = 0`` the equality duals are the
node potentials that enter arc reduced costs as ``y(head) - y(tail)``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EmptyDemand, OverflowRisk
from .netgraph import ArcKind, Layer
from .scenario import Scenario

MAX_COLUMNS = 5_000_000


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """min ½x'Qx + c'x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  x >= lower.

    ``lower`` holds 0 for sign-constrained columns and -inf for free ones.
    """
    Q: sp.csr_matrix
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        n = len(self.c)
        object.__setattr__(self, "Q", sp.csr_matrix(self.Q, dtype=float))
        object.__setattr__(self, "A_eq", sp.csr_matrix(self.A_eq, dtype=float))
        object.__setattr__(self, "A_in", sp.csr_matrix(self.A_in, dtype=float))
        for name in ("c", "b_eq", "b_in", "lower"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if self.Q.shape != (n, n):
            raise DimensionMismatch(f"Q is {self.Q.shape}, expected {(n, n)}")
        if self.A_eq.shape != (len(self.b_eq), n) and not (len(self.b_eq) == 0 and self.A_eq.shape[0] == 0):
            raise DimensionMismatch(f"A_eq is {self.A_eq.shape} for {len(self.b_eq)} rows, {n} columns")
        if self.A_in.shape != (len(self.b_in), n) and not (len(self.b_in) == 0 and self.A_in.shape[0] == 0):
            raise DimensionMismatch(f"A_in is {self.A_in.shape} for {len(self.b_in)} rows, {n} columns")
        if len(self.lower) != n:
            raise DimensionMismatch("lower has the wrong length")
        if not np.all((self.lower == 0) | np.isneginf(self.lower)):
            raise ValueError("lower bounds must be 0 or -inf")

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m_eq(self) -> int:
        return len(self.b_eq)

    @property
    def m_in(self) -> int:
        return len(self.b_in)

    @property
    def bounded(self) -> np.ndarray:
        return self.lower == 0

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.Q @ x) + self.c @ x)

    @classmethod
    def dense(cls, Q, c, A_eq=None, b_eq=None, A_in=None, b_in=None, lower=None):
        """Convenience constructor for small dense problems (free columns
        unless ``lower`` is given)."""
        c = np.asarray(c, dtype=float)
        n = len(c)
        A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(A_eq)
        A_in = np.zeros((0, n)) if A_in is None else np.atleast_2d(A_in)
        b_eq = np.zeros(0) if b_eq is None else b_eq
        b_in = np.zeros(0) if b_in is None else b_in
        lower = np.full(n, -np.inf) if lower is None else lower
        return cls(sp.csr_matrix(np.atleast_2d(Q)), c, sp.csr_matrix(A_eq), b_eq,
                   sp.csr_matrix(A_in), b_in, lower)


@dataclass(frozen=True)
class VariableIndex:
    """Bijection between QP columns and flow variables."""
    n_requests: int
    n_arcs: int
    n_nodes: int
    road_arcs: tuple[int, ...]
    transit_arcs: tuple[int, ...]
    road_nodes: tuple[int, ...]
    _road_pos: dict = field(default_factory=dict, repr=False, compare=False)
    _road_node_pos: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._road_pos.update({a: k for k, a in enumerate(self.road_arcs)})
        self._road_node_pos.update({j: k for k, j in enumerate(self.road_nodes)})

    @classmethod
    def for_scenario(cls, s: Scenario) -> "VariableIndex":
        net = s.network
        return cls(len(s.requests), net.n_arcs, net.n_nodes,
                   tuple(int(a) for a in net.road_arcs),
                   tuple(int(a) for a in net.transit_arcs),
                   tuple(int(j) for j in net.road_nodes))

    @property
    def n_columns(self) -> int:
        return self.n_requests * self.n_arcs + len(self.road_arcs)

    @property
    def n_eq_rows(self) -> int:
        return self.n_requests * self.n_nodes + len(self.road_nodes)

    def customer_col(self, m: int, arc: int) -> int:
        return m * self.n_arcs + arc

    def rebalancing_col(self, arc: int) -> int:
        return self.n_requests * self.n_arcs + self._road_pos[arc]

    def describe(self, col: int) -> tuple:
        """Inverse map: ``("customer", m, arc)`` or ``("rebalancing", arc)``."""
        if not 0 <= col < self.n_columns:
            raise IndexError(col)
        m, a = divmod(col, self.n_arcs)
        if m < self.n_requests:
            return ("customer", m, a)
        return ("rebalancing", self.road_arcs[col - self.n_requests * self.n_arcs])

    def customer_row(self, m: int, node: int) -> int:
        return m * self.n_nodes + node

    def vehicle_row(self, node: int) -> int:
        return self.n_requests * self.n_nodes + self._road_node_pos[node]

    def road_capacity_row(self, arc: int) -> int:
        return self._road_pos[arc]

    def transit_capacity_row(self, arc: int) -> int:
        return len(self.road_arcs) + self.transit_arcs.index(arc)

    def pack(self, customer: np.ndarray, rebalancing: np.ndarray) -> np.ndarray:
        customer = np.asarray(customer, dtype=float)
        rebalancing = np.asarray(rebalancing, dtype=float)
        if customer.shape != (self.n_requests, self.n_arcs) or rebalancing.shape != (self.n_arcs,):
            raise DimensionMismatch("flow arrays do not match the index")
        return np.concatenate([customer.ravel(), rebalancing[list(self.road_arcs)]])

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_columns,):
            raise DimensionMismatch(f"vector of length {x.shape} for {self.n_columns} columns")
        split = self.n_requests * self.n_arcs
        customer = x[:split].reshape(self.n_requests, self.n_arcs).copy()
        rebalancing = np.zeros(self.n_arcs)
        rebalancing[list(self.road_arcs)] = x[split:]
        return customer, rebalancing


@dataclass(frozen=True)
class CostBreakdown:
    time: float
    amod_operating: float
    transit_operating: float
    regularization: float

    @property
    def total(self) -> float:
        return self.time + self.amod_operating + self.transit_operating + self.regularization

    @property
    def monetary(self) -> float:
        """Social cost without the numerical regularizer."""
        return self.time + self.amod_operating + self.transit_operating


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """Customer flows (requests x arcs, customers/h) and rebalancing flows
    (per arc id, zero off the road layer), with the social cost in USD/h."""
    customer: np.ndarray
    rebalancing: np.ndarray
    breakdown: CostBreakdown
    tag: str = ""

    @property
    def objective(self) -> float:
        return self.breakdown.total

    def road_vehicle_flow(self) -> np.ndarray:
        """Total vehicles per hour on every arc (meaningful on road arcs)."""
        return self.rebalancing + self.customer.sum(axis=0)


def arc_operating_costs(s: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-arc vehicle operating cost (road) and passenger operating cost
    (transit), USD per traversal; zero elsewhere."""
    net, k = s.network, s.costs
    road = net.kind_mask(ArcKind.ROAD)
    transit = net.kind_mask(ArcKind.TRANSIT)
    vehicle_cost = np.where(road, k.amod_distance_cost * net.distance + k.energy_cost * net.energy, 0.0)
    transit_cost = np.where(transit, k.transit_distance_cost * net.distance, 0.0)
    return vehicle_cost, transit_cost


def assemble(s: Scenario, max_columns: int = MAX_COLUMNS) -> tuple[QuadraticProgram, VariableIndex]:
    if not s.requests:
        raise EmptyDemand("scenario has no travel requests")
    net = s.network
    idx = VariableIndex.for_scenario(s)
    n = idx.n_columns
    if n > max_columns:
        raise OverflowRisk(f"{n} columns exceeds the cap of {max_columns}")
    M, nA, nV = idx.n_requests, net.n_arcs, net.n_nodes
    road = np.asarray(idx.road_arcs, dtype=np.int64)
    transit = np.asarray(idx.transit_arcs, dtype=np.int64)
    n_road = len(road)
    tail, head = net.tail, net.head

    # customer balance: +1 at head row, -1 at tail row, for every (m, arc)
    cols = np.arange(M * nA)
    m_of = cols // nA
    a_of = cols % nA
    rows = [m_of * nV + head[a_of], m_of * nV + tail[a_of]]
    vals = [np.ones(M * nA), -np.ones(M * nA)]
    colz = [cols, cols]
    # vehicle balance over road arcs: customer columns and rebalancing columns
    vrow = np.full(nV, -1, dtype=np.int64)
    vrow[list(idx.road_nodes)] = M * nV + np.arange(len(idx.road_nodes))
    road_cols = (np.arange(M)[:, None] * nA + road[None, :]).ravel()
    road_arc_of = np.tile(road, M)
    reb_cols = M * nA + np.arange(n_road)
    for cc, aa in ((road_cols, road_arc_of), (reb_cols, road)):
        rows += [vrow[head[aa]], vrow[tail[aa]]]
        vals += [np.ones(len(cc)), -np.ones(len(cc))]
        colz += [cc, cc]
    A_eq = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(colz))),
                         shape=(idx.n_eq_rows, n))
    b_eq = np.zeros(idx.n_eq_rows)
    for m, r in enumerate(s.requests):
        b_eq[m * nV + r.origin] -= r.rate
        b_eq[m * nV + r.destination] += r.rate

    # capacity rows
    in_rows, in_cols = [], []
    for k, a in enumerate(road):
        cc = np.append(np.arange(M) * nA + a, M * nA + k)
        in_rows.append(np.full(len(cc), k))
        in_cols.append(cc)
    for k, a in enumerate(transit):
        cc = np.arange(M) * nA + a
        in_rows.append(np.full(len(cc), n_road + k))
        in_cols.append(cc)
    m_in = n_road + len(transit)
    if m_in:
        ri, ci = np.concatenate(in_rows), np.concatenate(in_cols)
        A_in = sp.csr_matrix((np.ones(len(ri)), (ri, ci)), shape=(m_in, n))
    else:
        A_in = sp.csr_matrix((0, n))
    b_in = np.concatenate([net.capacity[road], net.capacity[transit]])

    vehicle_cost, transit_cost = arc_operating_costs(s)
    customer_cost = s.costs.value_of_time * net.time + vehicle_cost + transit_cost
    c = np.concatenate([np.tile(customer_cost, M), vehicle_cost[road]])
    Q = sp.diags(np.full(n, 2.0 * s.costs.regularization), format="csr")
    qp = QuadraticProgram(Q, c, A_eq, b_eq, A_in, b_in, np.zeros(n))
    return qp, idx


def objective_direct(s: Scenario, customer: np.ndarray, rebalancing: np.ndarray) -> CostBreakdown:
    """Social cost evaluated arc by arc from the flows, without the QP."""
    net, k = s.network, s.costs
    customer = np.asarray(customer, dtype=float)
    rebalancing = np.asarray(rebalancing, dtype=float)
    if customer.shape != (len(s.requests), net.n_arcs) or rebalancing.shape != (net.n_arcs,):
        raise DimensionMismatch("flows do not match the scenario dimensions")
    road = net.kind_mask(ArcKind.ROAD)
    transit = net.kind_mask(ArcKind.TRANSIT)
    per_arc = customer.sum(axis=0)
    time = k.value_of_time * float(np.sum(customer @ net.time))
    op = k.amod_distance_cost * net.distance + k.energy_cost * net.energy
    amod = float(np.sum((op * (rebalancing + per_arc))[road]))
    tr = k.transit_distance_cost * float(np.sum((net.distance * per_arc)[transit]))
    reg = k.regularization * (float(np.sum(customer ** 2)) + float(np.sum(rebalancing[road] ** 2)))
    return CostBreakdown(time, amod, tr, reg)


def solution_tag(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype=float).tobytes()).hexdigest()[:16]


def extract_flows(qp: QuadraticProgram, idx: VariableIndex, x: np.ndarray,
                  s: Scenario) -> FlowSolution:
    x = np.asarray(x, dtype=float)
    if x.shape != (qp.n,) or qp.n != idx.n_columns:
        raise DimensionMismatch("primal vector does not match the QP")
    customer, rebalancing = idx.unpack(x)
    return FlowSolution(customer, rebalancing, objective_direct(s, customer, rebalancing),
                        solution_tag(x))


# ------------------------------------------------------------ triplet dump
#
# Plain-text format, one record per line:
#   iamod-qp <n> <m_eq> <m_in>
#   Q <i> <j> <v>      c <i> <v>      lb <i> <v>
#   Aeq <i> <j> <v>    beq <i> <v>
#   Ain <i> <j> <v>    bin <i> <v>
# Indices are 0-based; values use repr() so the dump round-trips exactly.

def dump_qp(qp: QuadraticProgram, path) -> None:
    lines = [f"iamod-qp {qp.n} {qp.m_eq} {qp.m_in}"]

    def matrix(tag, M):
        coo = M.tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"{tag} {i} {j} {float(v)!r}")

    def vector(tag, v):
        for i, val in enumerate(v):
            if val != 0:
                lines.append(f"{tag} {i} {float(val)!r}")

    matrix("Q", qp.Q)
    vector("c", qp.c)
    for i, val in enumerate(qp.lower):
        if np.isneginf(val):
            lines.append(f"lb {i} -inf")
    matrix("Aeq", qp.A_eq)
    vector("beq", qp.b_eq)
    matrix("Ain", qp.A_in)
    vector("bin", qp.b_in)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_qp(path) -> QuadraticProgram:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    head = text[0].split()
    if head[0] != "iamod-qp":
        raise ValueError("not a QP triplet dump")
    n, m_eq, m_in = (int(t) for t in head[1:])
    trip = {"Q": ([], [], []), "Aeq": ([], [], []), "Ain": ([], [], [])}
    vecs = {"c": np.zeros(n), "beq": np.zeros(m_eq), "bin": np.zeros(m_in), "lb": np.zeros(n)}
    for line in text[1:]:
        tok = line.split()
        if not tok:
            continue
        if tok[0] in trip:
            r, cidx, v = trip[tok[0]]
            r.append(int(tok[1]))
            cidx.append(int(tok[2]))
            v.append(float(tok[3]))
        else:
            vecs[tok[0]][int(tok[1])] = float(tok[2])

    def mat(tag, shape):
        r, cidx, v = trip[tag]
        return sp.csr_matrix((v, (r, cidx)), shape=shape)

    return QuadraticProgram(mat("Q", (n, n)), vecs["c"], mat("Aeq", (m_eq, n)), vecs["beq"],
                            mat("Ain", (m_in, n)), vecs["bin"], vecs["lb"])
