"""Recursive quantum network simulator.

Hierarchical topologies with per-level routing, explicit state and action
requests, a density-matrix link layer (generation, purification, swapping,
teleportation) and a recursive request engine, plus a flat reference
simulator for checking the engine's results.
"""
from .density import DensityMatrix, entropy, fidelity, werner
from .engine import Config, Engine, Strategy, decompose, map_boundary
from .errors import ParseError, QrnaError
from .harness import Scenario, check_tables, routes, run
from .requests import (
    ActionRequest,
    QubitAddress,
    Response,
    StateRequest,
    StateSpec,
    decode,
    encode,
)
from .topology import Topology, build_tables, format_tables

__version__ = "0.1.0"

__all__ = [
    "ActionRequest", "Config", "DensityMatrix", "Engine", "ParseError", "QrnaError",
    "QubitAddress", "Response", "Scenario", "StateRequest", "StateSpec", "Strategy",
    "Topology", "build_tables", "check_tables", "decode", "decompose", "encode",
    "entropy", "fidelity", "format_tables", "map_boundary", "routes", "run", "werner",
]
