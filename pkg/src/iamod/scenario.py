"""Scenario bundle (network + demand + cost parameters), its JSON file
format, and the capacity transformations used by the sweeps."""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import SchemaError, UnitError
from .netgraph import (Arc, ArcKind, Layer, LayeredNetwork, Node, VehicleParams,
                       build_network)

log = logging.getLogger(__name__)

FORMAT = "iamod-scenario"
VERSION = 1

METERS_PER_MILE = 1609.344
JOULES_PER_KWH = 3.6e6

# unit tag -> factor converting to the canonical unit (first entry of each table)
UNITS = {
    "value_of_time": {"usd_per_s": 1.0, "usd_per_min": 1 / 60, "usd_per_hour": 1 / 3600},
    "amod_distance_cost": {"usd_per_m": 1.0, "usd_per_km": 1e-3,
                           "usd_per_mile": 1 / METERS_PER_MILE},
    "energy_cost": {"usd_per_j": 1.0, "usd_per_kwh": 1 / JOULES_PER_KWH},
    "transit_distance_cost": {"usd_per_m": 1.0, "usd_per_km": 1e-3,
                              "usd_per_mile": 1 / METERS_PER_MILE},
    "regularization": {"usd_per_rate_sq": 1.0},
    "carbon_intensity": {"kg_per_j": 1.0, "kg_per_kwh": 1 / JOULES_PER_KWH},
    "air_density": {"kg_per_m3": 1.0},
    "drag_area": {"m2": 1.0},
    "rolling_coeff": {"1": 1.0},
    "mass": {"kg": 1.0},
    "efficiency": {"1": 1.0, "percent": 0.01},
}


def to_canonical(quantity: str, value: float, unit: str) -> float:
    try:
        return value * UNITS[quantity][unit]
    except KeyError:
        raise UnitError(f"unrecognized unit {unit!r} for {quantity}") from None


def from_canonical(quantity: str, value: float, unit: str) -> float:
    try:
        return value / UNITS[quantity][unit]
    except KeyError:
        raise UnitError(f"unrecognized unit {unit!r} for {quantity}") from None


def canonical_unit(quantity: str) -> str:
    return next(iter(UNITS[quantity]))


@dataclass(frozen=True)
class Request:
    origin: int
    destination: int
    rate: float  # customers per hour


@dataclass(frozen=True)
class CostParams:
    """Cost weights in canonical units (USD, s, m, J, customers/hour)."""
    value_of_time: float
    amod_distance_cost: float
    energy_cost: float
    transit_distance_cost: float
    regularization: float = 1e-6
    carbon_intensity: float = 0.08 * UNITS["carbon_intensity"]["kg_per_kwh"]

    def __post_init__(self):
        for name in ("value_of_time", "amod_distance_cost", "energy_cost",
                     "transit_distance_cost", "carbon_intensity"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.regularization > 0:
            raise ValueError("regularization must be strictly positive")

    @classmethod
    def default_rates(cls, regularization: float = 1e-6) -> "CostParams":
        """Default rates: 24.40 USD/h, 0.486 USD/mile, 0.47 USD/mile,
        0.247 USD/kWh."""
        return cls(
            value_of_time=to_canonical("value_of_time", 24.40, "usd_per_hour"),
            amod_distance_cost=to_canonical("amod_distance_cost", 0.486, "usd_per_mile"),
            energy_cost=to_canonical("energy_cost", 0.247, "usd_per_kwh"),
            transit_distance_cost=to_canonical("transit_distance_cost", 0.47, "usd_per_mile"),
            regularization=regularization,
        )


@dataclass(frozen=True)
class Scenario:
    network: LayeredNetwork
    requests: tuple[Request, ...]
    costs: CostParams
    vehicle: VehicleParams = VehicleParams()
    label: str = ""
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        nodes = self.network.nodes
        for m, r in enumerate(self.requests):
            for end in (r.origin, r.destination):
                if not (0 <= end < len(nodes)) or nodes[end].layer != Layer.WALK:
                    raise SchemaError(f"request {m}: node {end} is not a walking node")
            if r.origin == r.destination:
                raise SchemaError(f"request {m}: origin equals destination")
            if not r.rate > 0:
                raise SchemaError(f"request {m}: rate must be positive")

    @property
    def total_demand(self) -> float:
        return sum(r.rate for r in self.requests)


def scale_road_capacity(s: Scenario, fraction: float) -> Scenario:
    """Multiply every road-arc capacity by ``fraction`` (the share of road
    capacity left available to the fleet)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if fraction == 1.0:
        return s
    caps = {k: s.network.arcs[k].capacity * fraction for k in s.network.road_arcs}
    return replace(s, network=s.network.with_capacities(caps))


def zero_transit_capacity(s: Scenario) -> Scenario:
    """AMoD-only variant: close every transit arc."""
    caps = {int(k): 0.0 for k in s.network.transit_arcs}
    if not caps:
        return s
    return replace(s, network=s.network.with_capacities(caps))


# ---------------------------------------------------------------- file format

def _tagged(quantity: str, value: float) -> dict:
    return {"value": value, "unit": canonical_unit(quantity)}


def scenario_to_dict(s: Scenario) -> dict:
    nodes = []
    for n in s.network.nodes:
        d: dict[str, Any] = {"id": n.id, "layer": n.layer.value}
        if n.position is not None:
            d["x_m"], d["y_m"] = n.position
        nodes.append(d)
    arcs = []
    for a in s.network.arcs:
        d = {"tail": a.tail, "head": a.head, "kind": a.kind.value,
             "time_s": a.time, "distance_m": a.distance}
        if a.capacity is not None:
            d["capacity_per_h"] = a.capacity
        arcs.append(d)
    costs = {name: _tagged(name, getattr(s.costs, name))
             for name in ("value_of_time", "amod_distance_cost", "energy_cost",
                          "transit_distance_cost", "regularization", "carbon_intensity")}
    vehicle = {name: _tagged(name, getattr(s.vehicle, name))
               for name in ("air_density", "drag_area", "rolling_coeff", "mass", "efficiency")}
    return {
        "meta": {"format": FORMAT, "version": VERSION, "label": s.label},
        "nodes": nodes,
        "arcs": arcs,
        "requests": [{"origin": r.origin, "destination": r.destination, "rate_per_h": r.rate}
                     for r in s.requests],
        "costs": costs,
        "vehicle": vehicle,
    }


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=1, sort_keys=False) + "\n"


def scenario_hash(s: Scenario) -> str:
    """sha256 of the canonical file form; used to tie artifacts to inputs."""
    return hashlib.sha256(dumps_scenario(s).encode("utf-8")).hexdigest()


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(s), encoding="utf-8")


def _get(obj: dict, key: str, where: str, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is not None and (not isinstance(value, kind) or isinstance(value, bool)):
        raise SchemaError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, "
                          f"got {type(value).__name__}")
    return value


def _number(obj: dict, key: str, where: str) -> float:
    return float(_get(obj, key, where, (int, float)))


def _tagged_value(block: dict, quantity: str, where: str) -> float:
    entry = _get(block, quantity, where, dict)
    value = _number(entry, "value", f"{where}.{quantity}")
    unit = _get(entry, "unit", f"{where}.{quantity}", str)
    return to_canonical(quantity, value, unit)


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise SchemaError("top level must be a JSON object")
    meta = _get(data, "meta", "$", dict)
    if meta.get("format", FORMAT) != FORMAT:
        raise SchemaError(f"meta.format: expected {FORMAT!r}")
    label = str(meta.get("label", ""))

    nodes = []
    for k, nd in enumerate(_get(data, "nodes", "$", list)):
        where = f"nodes[{k}]"
        layer = _get(nd, "layer", where, str)
        try:
            layer = Layer(layer)
        except ValueError:
            raise SchemaError(f"{where}.layer: unknown layer {layer!r}") from None
        pos = None
        if "x_m" in nd or "y_m" in nd:
            pos = (_number(nd, "x_m", where), _number(nd, "y_m", where))
        nodes.append(Node(int(_get(nd, "id", where, int)), layer, pos))

    arcs = []
    for k, ad in enumerate(_get(data, "arcs", "$", list)):
        where = f"arcs[{k}]"
        kind = _get(ad, "kind", where, str)
        try:
            kind = ArcKind(kind)
        except ValueError:
            raise SchemaError(f"{where}.kind: unknown arc kind {kind!r}") from None
        cap = _number(ad, "capacity_per_h", where) if ad.get("capacity_per_h") is not None else None
        arcs.append(Arc(int(_get(ad, "tail", where, int)), int(_get(ad, "head", where, int)), kind,
                        _number(ad, "time_s", where), _number(ad, "distance_m", where), cap))

    costs_block = _get(data, "costs", "$", dict)
    costs = CostParams(**{q: _tagged_value(costs_block, q, "costs")
                          for q in ("value_of_time", "amod_distance_cost", "energy_cost",
                                    "transit_distance_cost", "regularization",
                                    "carbon_intensity")})
    vehicle_block = _get(data, "vehicle", "$", dict)
    vehicle = VehicleParams(**{q: _tagged_value(vehicle_block, q, "vehicle")
                               for q in ("air_density", "drag_area", "rolling_coeff",
                                         "mass", "efficiency")})

    notes = []
    requests = []
    for k, rd in enumerate(_get(data, "requests", "$", list)):
        where = f"requests[{k}]"
        rate = _number(rd, "rate_per_h", where)
        req = Request(int(_get(rd, "origin", where, int)),
                      int(_get(rd, "destination", where, int)), rate)
        if rate == 0:
            msg = f"{where}: zero-rate request dropped"
            notes.append(msg)
            warnings.warn(msg, stacklevel=3)
            continue
        if rate < 0:
            raise SchemaError(f"{where}.rate_per_h: must be non-negative")
        requests.append(req)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        net = build_network(nodes, arcs, vehicle)
    notes.extend(str(w.message) for w in caught)
    return Scenario(net, tuple(requests), costs, vehicle, label, tuple(notes))


def loads_scenario(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data)


def load_scenario(path) -> Scenario:
    return loads_scenario(Path(path).read_text(encoding="utf-8"))
