"""Serverless function benchmarking over emulated edge and cloud networks."""
from .scenario import WanParams, ScenarioSpec, Topology, derive_scenario, build_topology, emit_netem_commands
from .workload import TestPlan, RequestRecord, build_plan
from .cluster import run_sim
from .config import SimSettings, default_settings

__version__ = "0.1.0"
