"""Evaluation quantities for one solve and the road-capacity sweep."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .equilibrium import verify_equilibrium
from .errors import IAMoDError, MismatchedProvenance
from .netgraph import ArcKind
from .pricing import PriceSchedule, derive_prices, trip_toll_summary
from .qpmodel import FlowSolution, assemble, extract_flows
from .qpsolver import SolverOptions, solve
from .scenario import Scenario, scale_road_capacity, zero_transit_capacity

log = logging.getLogger(__name__)

VARIANTS = ("iamod", "amod")
MODES = ("road", "walk", "transit")


@dataclass(frozen=True)
class ScenarioMetrics:
    share_road: float  # fraction of passenger distance
    share_walk: float  # walking and mode switching
    share_transit: float
    avg_travel_time: float  # s per customer
    monetary_cost: float  # USD/h, regularizer excluded
    regularization_cost: float  # USD/h
    emissions: float  # kg CO2 per hour
    fleet_size_estimate: float  # vehicles, flow x travel time
    avg_toll_per_trip: float  # USD

    @property
    def modal_share(self) -> dict:
        return {"road": self.share_road, "walk": self.share_walk, "transit": self.share_transit}

    def cost(self, include_regularization: bool = False) -> float:
        return self.monetary_cost + (self.regularization_cost if include_regularization else 0.0)


def compute_metrics(s: Scenario, flows: FlowSolution, prices: PriceSchedule) -> ScenarioMetrics:
    if flows.tag != prices.tag:
        raise MismatchedProvenance("flows and prices come from different solves")
    net = s.network
    road = net.kind_mask(ArcKind.ROAD)
    transit = net.kind_mask(ArcKind.TRANSIT)
    walk = ~(road | transit)
    per_arc = flows.customer.sum(axis=0)
    pdist = net.distance * per_arc
    by_mode = np.array([pdist[road].sum(), pdist[walk].sum(), pdist[transit].sum()])
    total = by_mode.sum()
    shares = by_mode / total if total > 0 else np.zeros(3)

    demand = s.total_demand
    vehicles = np.where(road, per_arc + flows.rebalancing, 0.0)
    b = flows.breakdown
    return ScenarioMetrics(
        share_road=float(shares[0]), share_walk=float(shares[1]), share_transit=float(shares[2]),
        avg_travel_time=float(net.time @ per_arc / demand),
        monetary_cost=b.monetary,
        regularization_cost=b.regularization,
        emissions=float(s.costs.carbon_intensity * (net.energy @ vehicles)),
        fleet_size_estimate=float(net.time @ vehicles / 3600.0),
        avg_toll_per_trip=trip_toll_summary(flows, prices, s).average_toll,
    )


@dataclass(frozen=True)
class SweepRow:
    fraction: float
    variant: str
    status: str
    metrics: Optional[ScenarioMetrics] = None
    objective: float = math.nan
    equilibrium: Optional[bool] = None
    max_deviation: float = math.nan
    error: str = ""


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]

    def row(self, fraction: float, variant: str) -> SweepRow:
        for r in self.rows:
            if r.fraction == fraction and r.variant == variant:
                return r
        raise KeyError((fraction, variant))

    def series(self, variant: str) -> list[SweepRow]:
        return [r for r in self.rows if r.variant == variant]

    # -------------------------------------------------------------- export
    COLUMNS = ("fraction", "variant", "status", "equilibrium", "max_deviation", "objective",
               "monetary_cost", "regularization_cost", "share_road", "share_walk",
               "share_transit", "avg_travel_time_s", "emissions_kg_per_h",
               "fleet_size_estimate", "avg_toll_usd", "error")

    def _flat(self, r: SweepRow) -> dict:
        m = r.metrics
        vals = dict.fromkeys(self.COLUMNS, math.nan)
        vals.update(fraction=r.fraction, variant=r.variant, status=r.status,
                    equilibrium=r.equilibrium, max_deviation=r.max_deviation,
                    objective=r.objective, error=r.error)
        if m is not None:
            vals.update(monetary_cost=m.monetary_cost, regularization_cost=m.regularization_cost,
                        share_road=m.share_road, share_walk=m.share_walk,
                        share_transit=m.share_transit, avg_travel_time_s=m.avg_travel_time,
                        emissions_kg_per_h=m.emissions, fleet_size_estimate=m.fleet_size_estimate,
                        avg_toll_usd=m.avg_toll_per_trip)
        return vals

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in self._flat(r).items()})
        return buf.getvalue()

    def to_json(self) -> str:
        rows = []
        for r in self.rows:
            d = asdict(r)
            rows.append({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()})
        return json.dumps({"rows": rows}, indent=1, sort_keys=True) + "\n"

    def to_gnuplot(self) -> str:
        """One whitespace-separated block per variant, blocks separated by
        two blank lines so they can be addressed with ``index``."""
        cols = ("fraction", "share_road", "share_walk", "share_transit", "avg_travel_time_s",
                "monetary_cost", "emissions_kg_per_h", "fleet_size_estimate", "avg_toll_usd")
        blocks = []
        for v in dict.fromkeys(r.variant for r in self.rows):
            lines = [f"# variant {v}", "# " + " ".join(cols)]
            for r in self.series(v):
                f = self._flat(r)
                lines.append(" ".join(repr(float(f[c])) for c in cols))
            blocks.append("\n".join(lines))
        return "\n\n\n".join(blocks) + "\n"


def variant_scenario(s: Scenario, fraction: float, variant: str) -> Scenario:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    out = scale_road_capacity(s, fraction)
    return zero_transit_capacity(out) if variant == "amod" else out


def run_point(s: Scenario, fraction: float, variant: str,
              opts: Optional[SolverOptions] = None, tol: float = 1e-4,
              verify: bool = True) -> SweepRow:
    """Scale, solve, price, verify and measure one sweep point. Errors are
    captured in the row."""
    try:
        sc = variant_scenario(s, fraction, variant)
        qp, idx = assemble(sc)
        res = solve(qp, opts)
        if not res.optimal:
            return SweepRow(fraction, variant, res.status.value, error=res.message)
        flows = extract_flows(qp, idx, res.x, sc)
        prices = derive_prices(res, sc, idx)
        eq, dev = None, math.nan
        if verify:
            rep = verify_equilibrium(sc, flows, res, prices, tol=tol, opts=opts)
            eq, dev = rep.equilibrium, rep.worst_deviation
        return SweepRow(fraction, variant, res.status.value, compute_metrics(sc, flows, prices),
                        flows.objective, eq, dev)
    except (IAMoDError, ValueError, ArithmeticError) as exc:
        log.warning("sweep point (%s, %s) failed: %s", fraction, variant, exc)
        return SweepRow(fraction, variant, "error", error=f"{type(exc).__name__}: {exc}")


def _run_point_args(args):
    return run_point(*args)


def sweep(s: Scenario, fractions: Sequence[float], variants: Sequence[str] = VARIANTS,
          jobs: int = 1, opts: Optional[SolverOptions] = None, tol: float = 1e-4,
          verify: bool = True) -> SweepTable:
    """Rows are ordered by fraction (as given), then variant (as given)."""
    fractions = [float(f) for f in fractions]
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in [0, 1]")
    diffs = np.diff(fractions)
    if len(fractions) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("fractions must be strictly increasing or strictly decreasing")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    tasks = [(s, f, v, opts, tol, verify) for f in fractions for v in variants]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_run_point_args, tasks))
    else:
        rows = [run_point(*t) for t in tasks]
    return SweepTable(tuple(rows))
