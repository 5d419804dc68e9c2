"""Microgrid frequency-regulation abstraction, bidding and distributed disaggregation."""

from . import abstraction, convexsolve, coordination, errors, harness, market, netgraph, netio, powerflow
from .abstraction import MicrogridAbstraction, build_abstraction
from .coordination import CoordinationProblem, Gains, centralized_oracle, solve_instant
from .netgraph import DiGraph
from .powerflow import NetworkModel

__all__ = [
    "abstraction", "convexsolve", "coordination", "errors", "harness", "market", "netgraph", "netio",
    "powerflow", "MicrogridAbstraction", "build_abstraction", "CoordinationProblem", "Gains",
    "centralized_oracle", "solve_instant", "DiGraph", "NetworkModel",
]
