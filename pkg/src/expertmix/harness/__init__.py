"""Scenario configuration, protocol runners, trajectory logging, bound
audits, and brute-force solver oracles."""

from .config import ScenarioConfig, load_config
from .runner import RunResult, run_scenario, write_outputs
from .audit import BoundReport, verify_bound
from .oracle import oracle_dfa_solve
