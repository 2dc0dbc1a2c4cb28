"""Distributed output regulation of heterogeneous LTI agents over switching digraphs."""

from .controllers import synthesize_gains
from .engine import SimulationTrace, simulate
from .graphnet import TopologySchedule, WeightedDigraph, laplacian
from .linalg import AgentModel, Exosystem
from .scenario import Scenario, load_scenario, section5_scenario
from .verification import audit_assumptions, closed_loop_matrix, regulator_solution

__version__ = "0.1.0"

__all__ = [
    "AgentModel",
    "Exosystem",
    "Scenario",
    "SimulationTrace",
    "TopologySchedule",
    "WeightedDigraph",
    "audit_assumptions",
    "closed_loop_matrix",
    "laplacian",
    "load_scenario",
    "regulator_solution",
    "section5_scenario",
    "simulate",
    "synthesize_gains",
]
