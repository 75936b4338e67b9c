import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iamod.errors import MismatchedProvenance, NotOptimal
from iamod.generator import grid_scenario
from iamod.qpmodel import arc_operating_costs, assemble, extract_flows
from iamod.qpsolver import SolverOptions, solve
from iamod.pricing import (derive_prices, dual_spread, load_prices, road_imbalance, save_prices,
                           trip_toll_summary, write_price_csv)
from iamod.scenario import replace

import instances

# hand-derived with rational arithmetic from the default cost table
TWO_NODE_POTENTIAL_GAP = 0.30944975376547873
SATURATED_TOLL = 2.1871004924690425


def _priced(s, opts=None):
    qp, idx = assemble(s)
    res = solve(qp, opts)
    assert res.optimal, res.message
    return qp, idx, res, extract_flows(qp, idx, res.x, s), derive_prices(res, s, idx)


def _huge_capacity(s):
    net = s.network
    return replace(s, network=net.with_capacities(
        {int(a): 1e7 for a in np.r_[net.road_arcs, net.transit_arcs]}))


def test_uncongested_network_has_no_tolls():
    s = _huge_capacity(grid_scenario(4, 4, demand_seed=1))
    _, _, _, flows, p = _priced(s)
    assert np.max(np.abs(p.road_tolls)) <= 1e-8
    assert np.max(np.abs(p.transit_congestion)) <= 1e-8
    transit = s.network.transit_arcs
    expected = s.costs.transit_distance_cost * s.network.distance[transit]
    np.testing.assert_allclose(p.transit_fares[transit], expected, rtol=1e-8, atol=1e-8)
    summary = trip_toll_summary(flows, p, s)
    assert summary.average_toll == pytest.approx(0.0, abs=1e-8)


def test_two_node_vehicle_potential_gap():
    s = instances.two_node(rate=100.0)
    _, _, _, _, p = _priced(s)
    gap = p.destination_charges[3] - p.destination_charges[2]
    assert gap == pytest.approx(TWO_NODE_POTENTIAL_GAP, rel=1e-7)
    assert p.road_tolls[0] == pytest.approx(0.0, abs=1e-8)


def test_saturated_arc_toll():
    s = instances.two_node(rate=100.0, capacity=60.0)
    _, _, _, flows, p = _priced(s)
    assert flows.customer[0, 0] == pytest.approx(60.0, abs=1e-6)
    assert flows.customer[0, 6] == pytest.approx(40.0, abs=1e-6)
    assert p.road_tolls[0] == pytest.approx(SATURATED_TOLL, rel=1e-7)
    summary = trip_toll_summary(flows, p, s)
    assert summary.per_request_toll[0] == pytest.approx(SATURATED_TOLL * 0.6, rel=1e-7)


@pytest.mark.parametrize("seed", [0, 3, 8])
def test_schedule_invariants(seed):
    s = grid_scenario(5, 5, demand_seed=seed)
    qp, idx, res, flows, p = _priced(s)
    net = s.network
    op, transit_op = arc_operating_costs(s)
    road, transit = net.road_arcs, net.transit_arcs
    assert np.array_equal(p.origin_charges, -p.destination_charges)
    assert p.road_tolls.min() >= -1e-8
    assert p.transit_congestion.min() >= -1e-8
    # reconstruction holds up to one floating-point rounding
    np.testing.assert_allclose(p.amod_arc_charges[road] - p.road_tolls[road], op[road],
                               rtol=0, atol=4 * np.spacing(np.max(np.abs(p.amod_arc_charges))))
    np.testing.assert_allclose(p.transit_fares[transit] - p.transit_congestion[transit],
                               transit_op[transit], rtol=0,
                               atol=4 * np.spacing(np.max(np.abs(p.transit_fares))))
    # complementary slackness: no toll on arcs with spare capacity
    total = flows.customer.sum(axis=0) + flows.rebalancing
    for a in road:
        if net.capacity[a] - total[a] > 1e-6 * net.capacity[a]:
            assert p.road_tolls[a] <= 1e-6
    for a in transit:
        if net.capacity[a] - total[a] > 1e-6 * net.capacity[a]:
            assert p.transit_congestion[a] <= 1e-6
    # entries outside their layer stay zero
    other = np.setdiff1d(np.arange(net.n_arcs), road)
    assert not np.any(p.road_tolls[other]) and not np.any(p.amod_arc_charges[other])
    assert not np.any(p.destination_charges[np.setdiff1d(np.arange(net.n_nodes), net.road_nodes)])
    assert p.tag == flows.tag


def test_congested_instance_has_binding_tolls():
    s = grid_scenario(5, 5, demand_seed=2, capacity_per_lane_speed=10.0)
    _, _, _, flows, p = _priced(s)
    net = s.network
    total = flows.customer.sum(axis=0) + flows.rebalancing
    tolled = net.road_arcs[p.road_tolls[net.road_arcs] > 1e-6]
    assert len(tolled) > 0
    np.testing.assert_allclose(total[tolled], net.capacity[tolled], rtol=1e-6)


@settings(max_examples=15)
@given(seed=st.integers(0, 50))
def test_trip_summary_matches_independent_recompute(seed):
    s = grid_scenario(3, 4, demand_seed=seed, n_requests=4, capacity_per_lane_speed=30.0)
    _, _, _, flows, p = _priced(s)
    summary = trip_toll_summary(flows, p, s)
    net = s.network
    rates = [r.rate for r in s.requests]
    for m, rate in enumerate(rates):
        toll = arc = fare = 0.0
        for k, a in enumerate(net.arcs):
            f = flows.customer[m, k]
            if a.kind.value == "road":
                toll += f * p.road_tolls[k]
                arc += f * p.amod_arc_charges[k]
            elif a.kind.value == "transit":
                fare += f * p.transit_fares[k]
        out = np.zeros(net.n_nodes)
        for k, a in enumerate(net.arcs):
            if a.kind.value == "road":
                out[a.tail] += flows.customer[m, k]
                out[a.head] -= flows.customer[m, k]
        origin = sum(p.origin_charges[j] * max(out[j], 0.0) for j in range(net.n_nodes))
        dest = sum(p.destination_charges[j] * max(-out[j], 0.0) for j in range(net.n_nodes))
        assert summary.per_request_toll[m] == pytest.approx(toll / rate, rel=1e-9, abs=1e-12)
        pf = summary.per_request_fare
        assert pf["arc"][m] == pytest.approx(arc / rate, rel=1e-9, abs=1e-12)
        assert pf["transit"][m] == pytest.approx(fare / rate, rel=1e-9, abs=1e-12)
        assert pf["origin"][m] == pytest.approx(origin / rate, rel=1e-9, abs=1e-12)
        assert pf["destination"][m] == pytest.approx(dest / rate, rel=1e-9, abs=1e-12)
    weights = np.array(rates) / sum(rates)
    assert summary.average_toll == pytest.approx(weights @ summary.per_request_toll, rel=1e-9,
                                                 abs=1e-12)


def test_road_imbalance():
    s = instances.two_node()
    f = np.zeros(s.network.n_arcs)
    f[0] = 5.0
    f[6] = 7.0  # walking arcs do not count
    np.testing.assert_array_equal(road_imbalance(s, f), [0.0, 0.0, 5.0, -5.0])


def test_unoptimal_result_cannot_be_priced():
    s = grid_scenario(4, 4, demand_seed=1)
    qp, idx = assemble(s)
    res = solve(qp, SolverOptions(max_iter=2))
    with pytest.raises(NotOptimal):
        derive_prices(res, s, idx)


def test_mismatched_provenance_refused():
    s = grid_scenario(3, 3, demand_seed=1)
    _, _, _, flows, p = _priced(s)
    other = grid_scenario(3, 3, demand_seed=2)
    _, _, _, flows2, _ = _priced(other)
    with pytest.raises(MismatchedProvenance):
        trip_toll_summary(flows2, p, other)
    assert p.perturbed(int(s.network.road_arcs[0]), 1.1).tag == p.tag


def test_perturbed_keeps_charges_consistent():
    s = instances.two_node(rate=100.0, capacity=60.0)
    _, _, _, _, p = _priced(s)
    q = p.perturbed(0, 1.1)
    assert q.road_tolls[0] == pytest.approx(1.1 * p.road_tolls[0], rel=1e-15)
    assert q.amod_arc_charges[0] - q.road_tolls[0] == pytest.approx(
        p.amod_arc_charges[0] - p.road_tolls[0], rel=1e-12)
    assert np.array_equal(q.road_tolls[1:], p.road_tolls[1:])


def test_csv_export(tmp_path):
    s = grid_scenario(3, 3, demand_seed=4)
    _, _, _, _, p = _priced(s)
    arcs, nodes = tmp_path / "arcs.csv", tmp_path / "nodes.csv"
    write_price_csv(p, s, arcs, nodes)
    with open(arcs, newline="") as fh:
        rows = list(csv.DictReader(fh))
    net = s.network
    assert len(rows) == len(net.road_arcs) + len(net.transit_arcs)
    for r in rows:
        k = int(r["arc_id"])
        if r["kind"] == "road":
            assert float(r["toll_usd"]) == p.road_tolls[k]
            assert float(r["arc_charge_usd"]) == p.amod_arc_charges[k]
        else:
            assert r["kind"] == "transit"
            assert float(r["fare_usd"]) == p.transit_fares[k]
    with open(nodes, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["node_id"]) for r in rows] == [int(j) for j in net.road_nodes]
    for r in rows:
        j = int(r["node_id"])
        assert float(r["destination_charge_usd"]) == p.destination_charges[j]
        assert float(r["origin_charge_usd"]) == p.origin_charges[j]


def test_json_round_trip(tmp_path):
    s = grid_scenario(3, 3, demand_seed=4)
    _, _, _, _, p = _priced(s)
    save_prices(p, tmp_path / "p.json")
    q = load_prices(tmp_path / "p.json")
    assert q.tag == p.tag
    for name in ("transit_fares", "road_tolls", "amod_arc_charges", "origin_charges",
                 "destination_charges", "customer_potentials", "transit_congestion"):
        assert np.array_equal(getattr(q, name), getattr(p, name))


def test_dual_spread_zero_for_identical_solves():
    s = grid_scenario(3, 3, demand_seed=1)
    qp, idx, res, _, _ = _priced(s)
    assert dual_spread(s, [res, res], idx) == 0.0
