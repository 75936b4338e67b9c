"""Three-layer intermodal digraph: walking, road and public-transit layers
joined by mode-switching arcs."""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (IsolatedNode, LayerViolation, MissingCapacity, NetworkError,
                     NonPositiveInput, NonPositiveTime)

GRAVITY = 9.81  # m/s^2


class Layer(str, Enum):
    WALK = "walk"
    ROAD = "road"
    TRANSIT = "transit"


class ArcKind(str, Enum):
    WALK = "walk"
    ROAD = "road"
    TRANSIT = "transit"
    SWITCH = "switch"


# (tail layer, head layer) pairs allowed for each arc kind
LEGAL_ARCS = {
    ArcKind.WALK: {(Layer.WALK, Layer.WALK)},
    ArcKind.ROAD: {(Layer.ROAD, Layer.ROAD)},
    ArcKind.TRANSIT: {(Layer.TRANSIT, Layer.TRANSIT)},
    ArcKind.SWITCH: {(Layer.WALK, Layer.ROAD), (Layer.ROAD, Layer.WALK),
                     (Layer.WALK, Layer.TRANSIT), (Layer.TRANSIT, Layer.WALK)},
}


@dataclass(frozen=True)
class VehicleParams:
    """Road-load parameters of the (electric) fleet vehicle."""
    air_density: float = 1.25  # kg/m^3
    drag_area: float = 0.4  # c_d * A_f, m^2
    rolling_coeff: float = 0.008
    mass: float = 750.0  # kg
    efficiency: float = 0.72  # tank-to-wheel

    def __post_init__(self):
        for name in ("air_density", "drag_area", "rolling_coeff", "mass", "efficiency"):
            if not getattr(self, name) > 0:
                raise NonPositiveInput(f"vehicle parameter {name} must be > 0")
        if self.efficiency > 1:
            raise NonPositiveInput("efficiency must lie in (0, 1]")


@dataclass(frozen=True)
class Node:
    id: int
    layer: Layer
    position: Optional[tuple[float, float]] = None  # meters, reporting only


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    kind: ArcKind
    time: float  # s
    distance: float  # m
    capacity: Optional[float] = None  # per hour; road and transit only
    energy: Optional[float] = None  # J per traversal; road only, derived


def arc_energy(distance: float, time: float, vehicle: VehicleParams,
               g: float = GRAVITY) -> float:
    """Energy (J) one vehicle spends traversing a road arc at constant speed
    ``distance / time``: aerodynamic drag plus rolling friction over the
    drivetrain efficiency."""
    if not (distance > 0 and time > 0):
        raise NonPositiveInput("arc_energy needs distance > 0 and time > 0")
    v = distance / time
    drag = 0.5 * vehicle.air_density * vehicle.drag_area * v * v
    rolling = vehicle.rolling_coeff * vehicle.mass * g
    return (drag + rolling) * distance / vehicle.efficiency


@dataclass(frozen=True, eq=False)
class LayeredNetwork:
    """Immutable validated network. Array views are read-only and indexed by
    arc id (position in ``arcs``)."""
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    warnings: tuple[str, ...] = ()
    tail: np.ndarray = field(init=False, repr=False)
    head: np.ndarray = field(init=False, repr=False)
    time: np.ndarray = field(init=False, repr=False)
    distance: np.ndarray = field(init=False, repr=False)
    capacity: np.ndarray = field(init=False, repr=False)
    energy: np.ndarray = field(init=False, repr=False)
    out_arcs: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    in_arcs: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        arrays = {
            "tail": np.array([a.tail for a in self.arcs], dtype=np.int64),
            "head": np.array([a.head for a in self.arcs], dtype=np.int64),
            "time": np.array([a.time for a in self.arcs], dtype=float),
            "distance": np.array([a.distance for a in self.arcs], dtype=float),
            "capacity": np.array([np.nan if a.capacity is None else a.capacity
                                  for a in self.arcs], dtype=float),
            "energy": np.array([0.0 if a.energy is None else a.energy
                                for a in self.arcs], dtype=float),
        }
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        outs = [[] for _ in self.nodes]
        ins = [[] for _ in self.nodes]
        for k, a in enumerate(self.arcs):
            outs[a.tail].append(k)
            ins[a.head].append(k)
        object.__setattr__(self, "out_arcs", tuple(tuple(o) for o in outs))
        object.__setattr__(self, "in_arcs", tuple(tuple(i) for i in ins))

    def __eq__(self, other):
        if not isinstance(other, LayeredNetwork):
            return NotImplemented
        return self.nodes == other.nodes and self.arcs == other.arcs

    def __hash__(self):
        return hash((self.nodes, self.arcs))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def arcs_of_kind(self, kind: ArcKind) -> np.ndarray:
        return np.array([k for k, a in enumerate(self.arcs) if a.kind == kind], dtype=np.int64)

    def nodes_of_layer(self, layer: Layer) -> np.ndarray:
        return np.array([n.id for n in self.nodes if n.layer == layer], dtype=np.int64)

    @property
    def road_arcs(self) -> np.ndarray:
        return self.arcs_of_kind(ArcKind.ROAD)

    @property
    def transit_arcs(self) -> np.ndarray:
        return self.arcs_of_kind(ArcKind.TRANSIT)

    @property
    def road_nodes(self) -> np.ndarray:
        return self.nodes_of_layer(Layer.ROAD)

    def kind_mask(self, kind: ArcKind) -> np.ndarray:
        return np.array([a.kind == kind for a in self.arcs], dtype=bool)

    def with_capacities(self, capacity: dict[int, float]) -> "LayeredNetwork":
        """Copy with the capacities of the given arc ids replaced."""
        arcs = list(self.arcs)
        for k, c in capacity.items():
            arcs[k] = replace(arcs[k], capacity=float(c))
        return LayeredNetwork(self.nodes, tuple(arcs), self.warnings)


def _check_arc(a: Arc, nodes: Sequence[Node]) -> None:
    n = len(nodes)
    if not (0 <= a.tail < n and 0 <= a.head < n):
        raise NetworkError(f"arc {a.tail}->{a.head} references a missing node")
    if a.tail == a.head:
        raise NetworkError(f"self-loop at node {a.tail}")
    pair = (nodes[a.tail].layer, nodes[a.head].layer)
    if pair not in LEGAL_ARCS[a.kind]:
        raise LayerViolation(
            f"{a.kind.value} arc {a.tail}->{a.head} joins {pair[0].value}->{pair[1].value}")
    if not a.time > 0:
        raise NonPositiveTime(f"arc {a.tail}->{a.head} has time {a.time}")
    if not a.distance >= 0:
        raise NetworkError(f"arc {a.tail}->{a.head} has negative distance")
    capacitated = a.kind in (ArcKind.ROAD, ArcKind.TRANSIT)
    if capacitated:
        if not a.distance > 0:
            raise NetworkError(f"{a.kind.value} arc {a.tail}->{a.head} needs distance > 0")
        if a.capacity is None or not np.isfinite(a.capacity):
            raise MissingCapacity(f"{a.kind.value} arc {a.tail}->{a.head} has no capacity")
        if a.capacity < 0:
            raise MissingCapacity(f"{a.kind.value} arc {a.tail}->{a.head} has negative capacity")
    elif a.capacity is not None:
        raise NetworkError(f"{a.kind.value} arc {a.tail}->{a.head} must be uncapacitated")


def _reach(start: Iterable[int], adjacency: Sequence[Sequence[int]]) -> set[int]:
    seen = set(start)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def build_network(nodes: Sequence[Node], arcs: Sequence[Arc],
                  vehicle: VehicleParams) -> LayeredNetwork:
    """Validate nodes/arcs and fill in road-arc energies.

    Capacities of exactly zero are allowed (closed arcs); any other
    capacity violation raises :class:`MissingCapacity`.
    """
    nodes = tuple(nodes)
    for k, node in enumerate(nodes):
        if node.id != k:
            raise NetworkError(f"node ids must be dense and ordered; got {node.id} at {k}")
        if not isinstance(node.layer, Layer):
            raise NetworkError(f"node {k} has unknown layer {node.layer!r}")
    seen = set()
    built = []
    for a in arcs:
        _check_arc(a, nodes)
        key = (a.tail, a.head, a.kind)
        if key in seen:
            raise NetworkError(f"duplicate {a.kind.value} arc {a.tail}->{a.head}")
        seen.add(key)
        energy = arc_energy(a.distance, a.time, vehicle) if a.kind == ArcKind.ROAD else None
        capacity = None if a.capacity is None else float(a.capacity)
        built.append(replace(a, time=float(a.time), distance=float(a.distance),
                             capacity=capacity, energy=energy))

    touched = set()
    road_touched = set()
    for a in built:
        touched.update((a.tail, a.head))
        if a.kind == ArcKind.ROAD:
            road_touched.update((a.tail, a.head))
    for node in nodes:
        if node.id not in touched:
            raise IsolatedNode(f"node {node.id} has no incident arcs")
        if node.layer == Layer.ROAD and node.id not in road_touched:
            raise IsolatedNode(f"road node {node.id} has no incident road arcs")

    succ = [[] for _ in nodes]
    pred = [[] for _ in nodes]
    for a in built:
        succ[a.tail].append(a.head)
        pred[a.head].append(a.tail)
    walk = [n.id for n in nodes if n.layer == Layer.WALK]
    forward = _reach(walk, succ)
    backward = _reach(walk, pred)
    notes = []
    for node in nodes:
        if node.layer == Layer.WALK:
            continue
        if node.id not in forward or node.id not in backward:
            notes.append(f"{node.layer.value} node {node.id} is not reachable "
                         "from and back to the walking layer")
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return LayeredNetwork(nodes, tuple(built), tuple(notes))


@dataclass(frozen=True)
class FeasibilityReport:
    walkable: tuple[bool, ...]

    @property
    def feasible(self) -> bool:
        return all(self.walkable)


def connectivity_report(net: LayeredNetwork, requests) -> FeasibilityReport:
    """Check, per request, that a walking-only path links origin to destination.

    Walking arcs are uncapacitated, so a scenario whose requests all pass is
    feasible for any road or transit capacity.
    """
    succ = [[] for _ in net.nodes]
    for a in net.arcs:
        if a.kind == ArcKind.WALK:
            succ[a.tail].append(a.head)
    cache: dict[int, set[int]] = {}
    flags = []
    for r in requests:
        if r.origin not in cache:
            cache[r.origin] = _reach([r.origin], succ)
        flags.append(r.destination in cache[r.origin])
    return FeasibilityReport(tuple(flags))
