"""Intermodal autonomous mobility-on-demand: social-optimum flows, the
pricing schedule read off their multipliers, and equilibrium checks."""
from .equilibrium import (EquilibriumReport, customer_best_response, operator_best_response,
                          verify_equilibrium)
from .generator import TransitLine, grid_scenario
from .metrics import ScenarioMetrics, SweepTable, compute_metrics, sweep
from .netgraph import Arc, ArcKind, Layer, LayeredNetwork, Node, VehicleParams, build_network
from .pricing import PriceSchedule, derive_prices, trip_toll_summary
from .qpmodel import FlowSolution, QuadraticProgram, VariableIndex, assemble, extract_flows
from .qpsolver import SolveResult, SolverOptions, Status, solve
from .scenario import CostParams, Request, Scenario, load_scenario, save_scenario

__all__ = [
    "Arc", "ArcKind", "CostParams", "EquilibriumReport", "FlowSolution", "Layer",
    "LayeredNetwork", "Node", "PriceSchedule", "QuadraticProgram", "Request", "Scenario",
    "ScenarioMetrics", "SolveResult", "SolverOptions", "Status", "SweepTable", "TransitLine",
    "VariableIndex", "VehicleParams", "assemble", "build_network", "compute_metrics",
    "customer_best_response", "derive_prices", "extract_flows", "grid_scenario",
    "load_scenario", "operator_best_response", "save_scenario", "solve", "sweep",
    "trip_toll_summary", "verify_equilibrium",
]
