"""Deterministic MANET simulator running DSR with a reputation-based IDS."""

from .config import ScenarioConfig, load, template
from .network import Network, run_scenario

__all__ = ["Network", "ScenarioConfig", "load", "run_scenario", "template"]
__version__ = "0.1.0"
