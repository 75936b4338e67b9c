import time

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from iamod.errors import DimensionMismatch
from iamod.generator import grid_scenario
from iamod.qpmodel import QuadraticProgram, assemble
from iamod.scenario import replace
from iamod.qpsolver import SolverOptions, Status, check_certificate, kkt_residuals, solve

import instances
from oracles import active_set_oracle, random_qp


def _dense_qp(Q, c, A_eq, b_eq, A_in, b_in, bounded):
    lower = np.where(bounded, 0.0, -np.inf)
    return QuadraticProgram.dense(Q, c, A_eq, b_eq, A_in, b_in, lower)


def test_unconstrained_minimizer():
    res = solve(QuadraticProgram.dense([[2.0]], [-2.0]))
    assert res.optimal
    assert res.x[0] == pytest.approx(1.0, abs=1e-10)


def test_equality_multiplier_sign():
    qp = QuadraticProgram.dense(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [2.0])
    res = solve(qp)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-10)
    assert res.y[0] == pytest.approx(-1.0, abs=1e-10)


def test_bound_multiplier_with_tiny_curvature():
    qp = QuadraticProgram.dense([[2e-6]], [1.0], lower=[0.0])
    res = solve(qp)
    assert res.x[0] == pytest.approx(0.0, abs=1e-9)
    assert res.w[0] == pytest.approx(1.0, abs=1e-8)


def test_inequality_multiplier_is_nonnegative():
    # min (x-3)^2 s.t. x <= 1: multiplier 4
    qp = QuadraticProgram.dense([[2.0]], [-6.0], A_in=[[1.0]], b_in=[1.0])
    res = solve(qp)
    assert res.x[0] == pytest.approx(1.0, abs=1e-9)
    assert res.z[0] == pytest.approx(4.0, abs=1e-8)


def test_kkt_residuals_hand_point():
    qp = QuadraticProgram.dense(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [2.0])
    rep = kkt_residuals(qp, [1.0, 1.0], [-1.0], [], [0.0, 0.0])
    assert max(rep.primal_feas, rep.dual_feas, rep.comp_slack, rep.duality_gap) < 1e-12
    bad = kkt_residuals(qp, [1.0 + 1e-4, 1.0], [-1.0], [], [0.0, 0.0])
    # 1 + 1e-4 is not exact in binary; allow one rounding
    assert max(bad.primal_feas, bad.dual_feas) >= 1e-4 * (1 - 1e-12)


def test_kkt_residuals_zero_candidate():
    s = grid_scenario(3, 3, demand_seed=0)
    qp, _ = assemble(s)
    rep = kkt_residuals(qp, np.zeros(qp.n), np.zeros(qp.m_eq), np.zeros(qp.m_in), np.zeros(qp.n))
    assert rep.primal_feas == pytest.approx(np.max(np.abs(qp.b_eq)), rel=0, abs=0)
    with pytest.raises(DimensionMismatch):
        kkt_residuals(qp, np.zeros(qp.n + 1), np.zeros(qp.m_eq), np.zeros(qp.m_in), np.zeros(qp.n))


@settings(max_examples=25)
@given(seed=st.integers(0, 2**31 - 1))
def test_matches_active_set_oracle(seed):
    data = random_qp(np.random.default_rng(seed))
    x_o, y_o, z_o, w_o = active_set_oracle(*data)
    res = solve(_dense_qp(*data))
    assert res.optimal, res.message
    scale = max(1.0, np.max(np.abs(x_o)))
    np.testing.assert_allclose(res.x, x_o, atol=1e-6 * scale, rtol=0)
    dual_scale = max(1.0, np.max(np.abs(np.concatenate([y_o, z_o, w_o]))))
    np.testing.assert_allclose(res.y, y_o, atol=1e-6 * dual_scale, rtol=0)
    np.testing.assert_allclose(res.z, z_o, atol=1e-6 * dual_scale, rtol=0)
    np.testing.assert_allclose(res.w, w_o, atol=1e-6 * dual_scale, rtol=0)


def test_infeasible_problem_gets_certificate():
    # x1 + x2 = 3 with x1, x2 <= 1
    qp = QuadraticProgram.dense(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [3.0],
                                np.eye(2), [1.0, 1.0])
    res = solve(qp)
    assert res.status == Status.INFEASIBLE
    assert res.certificate is not None
    assert check_certificate(qp, res.certificate)
    assert res.certificate.phase1_value == pytest.approx(1.0, rel=1e-6)


def test_uncapacitated_walking_keeps_scenarios_feasible():
    fig = instances.fig1_miniature()
    net = fig.network
    closed = net.with_capacities({int(a): 0.0 for a in np.r_[net.transit_arcs, net.road_arcs]})
    qp, idx = assemble(replace(fig, network=closed))
    res = solve(qp)
    assert res.optimal
    cust, reb = idx.unpack(res.x)
    assert np.max(np.abs(cust[:, net.road_arcs])) <= 1e-12
    assert np.max(np.abs(reb)) <= 1e-12


def test_infeasible_equality_system():
    qp = QuadraticProgram.dense(np.eye(2), [0.0, 0.0], [[1.0, 0.0], [1.0, 0.0]], [1.0, 2.0],
                                lower=[0.0, 0.0])
    res = solve(qp)
    assert res.status == Status.INFEASIBLE
    assert check_certificate(qp, res.certificate)


def test_iteration_limit_reported():
    s = grid_scenario(4, 4, demand_seed=1)
    qp, _ = assemble(s)
    res = solve(qp, SolverOptions(max_iter=2))
    assert res.status == Status.ITERATION_LIMIT
    assert "no convergence" in res.message


def test_negative_curvature_rejected():
    with pytest.raises(ValueError):
        solve(QuadraticProgram.dense([[-1.0]], [0.0]))


@pytest.mark.parametrize("seed", [0, 5])
def test_solution_unique_across_starting_points(seed):
    s = grid_scenario(4, 4, demand_seed=seed)
    qp, _ = assemble(s)
    base = solve(qp)
    assert base.optimal
    for start in (1, 2, 3):
        other = solve(qp, SolverOptions(seed=start))
        assert other.optimal
        scale = max(1.0, np.max(np.abs(base.x)))
        assert np.max(np.abs(other.x - base.x)) <= 1e-5 * scale


def test_complementary_slackness_on_network_problem():
    s = grid_scenario(5, 5, demand_seed=2)
    qp, _ = assemble(s)
    res = solve(qp)
    assert res.optimal
    slack = qp.b_in - qp.A_in @ res.x
    assert np.all(res.z >= 0) and np.all(res.w >= 0)
    assert np.all(slack >= -1e-8 * max(1.0, np.max(qp.b_in)))
    assert np.max(np.abs(res.z * slack)) <= 1e-6 * max(1.0, abs(res.residuals.primal_objective))
    assert np.max(np.abs(res.w * res.x)) <= 1e-6 * max(1.0, abs(res.residuals.primal_objective))
    assert res.residuals.worst(qp) <= 1e-8


def test_zero_capacity_rows_presolved():
    s = grid_scenario(3, 3, demand_seed=3)
    caps = {int(a): 0.0 for a in s.network.transit_arcs}
    s0 = replace(s, network=s.network.with_capacities(caps))
    qp, idx = assemble(s0)
    res = solve(qp)
    assert res.optimal
    cust, _ = idx.unpack(res.x)
    assert np.max(np.abs(cust[:, s.network.transit_arcs])) <= 1e-12
    assert res.residuals.worst(qp) <= 1e-8


def test_deterministic_repeat():
    qp, _ = assemble(grid_scenario(3, 4, demand_seed=7))
    a, b = solve(qp), solve(qp)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


def test_oracle_batch_speed():
    rng = np.random.default_rng(12345)
    t0 = time.perf_counter()
    for _ in range(10):
        data = random_qp(rng)
        assert solve(_dense_qp(*data)).optimal
    assert time.perf_counter() - t0 < 5.0
