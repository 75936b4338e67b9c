"""Synthetic Manhattan-like grid scenarios (stand-in for real street and
subway data)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import BadSpec
from .netgraph import Arc, ArcKind, Layer, Node, VehicleParams, build_network
from .scenario import CostParams, Request, Scenario

# switch-arc timing (s)
ROAD_TO_WALK = 60.0
TRANSIT_TO_WALK = 60.0
WALK_TO_ROAD = 120.0
WALK_TO_TRANSIT_BASE = 60.0


@dataclass(frozen=True)
class TransitLine:
    """Straight line along grid row or column ``index``."""
    orientation: str  # "row" or "col"
    index: int
    stop_every: int = 2
    headway: float = 600.0  # s
    speed: float = 10.0  # m/s
    capacity: float = 5000.0  # passengers per hour

    @classmethod
    def parse(cls, text: str) -> "TransitLine":
        """``"row:2"`` or ``"col:1:3"`` (orientation:index[:stop_every])."""
        parts = text.split(":")
        if len(parts) not in (2, 3) or parts[0] not in ("row", "col"):
            raise BadSpec(f"bad transit line spec {text!r}")
        try:
            nums = [int(p) for p in parts[1:]]
        except ValueError:
            raise BadSpec(f"bad transit line spec {text!r}") from None
        return cls(parts[0], *nums)


def _default_lines(rows: int, cols: int) -> list[TransitLine]:
    return [TransitLine("row", rows // 2), TransitLine("col", cols // 2)]


def grid_scenario(rows: int, cols: int, block: float = 200.0,
                  transit_lines: Optional[Sequence[Union[TransitLine, str]]] = None,
                  demand_seed: int = 0, *,
                  n_requests: int = 8,
                  rate_range: tuple[float, float] = (20.0, 120.0),
                  min_trip_blocks: int = 2,
                  walk_speed: float = 1.4,
                  speed_limit: float = 10.0,
                  lanes: int = 1,
                  capacity_per_lane_speed: float = 100.0,
                  costs: Optional[CostParams] = None,
                  vehicle: Optional[VehicleParams] = None,
                  label: Optional[str] = None) -> Scenario:
    """Build a ``rows x cols`` grid city.

    Walking and road layers share the grid topology; every street is a pair
    of opposite one-way road arcs with capacity
    ``capacity_per_lane_speed * lanes * speed_limit`` vehicles/hour (1000/h
    with the defaults). Every road intersection is linked to the walking
    node at the same location. Transit stops sit every ``stop_every``
    blocks along each line and connect to the co-located walking node.
    """
    if rows < 2 or cols < 2:
        raise BadSpec("grid needs rows, cols >= 2")
    if not (block > 0 and walk_speed > 0 and speed_limit > 0 and lanes > 0):
        raise BadSpec("block, speeds and lanes must be positive")
    lo, hi = rate_range
    if not 0 < lo <= hi:
        raise BadSpec("rate_range must satisfy 0 < low <= high")
    lines = _default_lines(rows, cols) if transit_lines is None else [
        TransitLine.parse(t) if isinstance(t, str) else t for t in transit_lines]
    vehicle = vehicle or VehicleParams()
    costs = costs or CostParams.default_rates()

    def cell(r, c):
        return r * cols + c

    n_cells = rows * cols
    nodes = [Node(cell(r, c), Layer.WALK, (c * block, r * block))
             for r in range(rows) for c in range(cols)]
    nodes += [Node(n_cells + cell(r, c), Layer.ROAD, (c * block, r * block))
              for r in range(rows) for c in range(cols)]
    arcs = []
    walk_time = block / walk_speed
    road_time = block / speed_limit
    road_cap = capacity_per_lane_speed * lanes * speed_limit
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0)):
                r2, c2 = r + dr, c + dc
                if r2 >= rows or c2 >= cols:
                    continue
                u, v = cell(r, c), cell(r2, c2)
                for a, b in ((u, v), (v, u)):
                    arcs.append(Arc(a, b, ArcKind.WALK, walk_time, block))
                    arcs.append(Arc(n_cells + a, n_cells + b, ArcKind.ROAD,
                                    road_time, block, road_cap))
    for k in range(n_cells):
        arcs.append(Arc(k, n_cells + k, ArcKind.SWITCH, WALK_TO_ROAD, 0.0))
        arcs.append(Arc(n_cells + k, k, ArcKind.SWITCH, ROAD_TO_WALK, 0.0))

    for line in lines:
        if line.orientation == "row":
            if not 0 <= line.index < rows:
                raise BadSpec(f"transit row {line.index} outside grid")
            cells = [cell(line.index, c) for c in range(0, cols, line.stop_every)]
        elif line.orientation == "col":
            if not 0 <= line.index < cols:
                raise BadSpec(f"transit column {line.index} outside grid")
            cells = [cell(r, line.index) for r in range(0, rows, line.stop_every)]
        else:
            raise BadSpec(f"unknown orientation {line.orientation!r}")
        if line.stop_every < 1 or len(cells) < 2:
            raise BadSpec("a transit line needs at least two stops")
        if not (line.headway >= 0 and line.speed > 0 and line.capacity >= 0):
            raise BadSpec("transit headway, speed and capacity must be non-negative")
        stops = []
        for w in cells:
            sid = len(nodes)
            nodes.append(Node(sid, Layer.TRANSIT, nodes[w].position))
            stops.append(sid)
            arcs.append(Arc(w, sid, ArcKind.SWITCH, WALK_TO_TRANSIT_BASE + line.headway / 2, 0.0))
            arcs.append(Arc(sid, w, ArcKind.SWITCH, TRANSIT_TO_WALK, 0.0))
        gap = line.stop_every * block
        for s1, s2 in zip(stops, stops[1:]):
            for a, b in ((s1, s2), (s2, s1)):
                arcs.append(Arc(a, b, ArcKind.TRANSIT, gap / line.speed, gap, line.capacity))

    net = build_network(nodes, arcs, vehicle)

    rng = np.random.default_rng(demand_seed)
    pairs = [(o, d) for o in range(n_cells) for d in range(n_cells)
             if abs(o // cols - d // cols) + abs(o % cols - d % cols) >= min_trip_blocks]
    if len(pairs) < n_requests:
        raise BadSpec("grid too small for the requested number of distinct trips")
    chosen = rng.choice(len(pairs), size=n_requests, replace=False)
    rates = rng.uniform(lo, hi, size=n_requests)
    requests = tuple(Request(int(pairs[i][0]), int(pairs[i][1]), round(float(a), 1))
                     for i, a in zip(chosen, rates))
    if label is None:
        label = f"grid-{rows}x{cols}-seed{demand_seed}"
    return Scenario(net, requests, costs, vehicle, label)
