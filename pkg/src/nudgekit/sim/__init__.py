"""Deterministic synthetic world, subjects and A/B scenarios."""

from .agent import AgentResponse, agent_respond
from .profiles import SubjectProfile, compliant, make_profiles, zero_drift, zero_noise
from .scenario import ARMS, ScenarioReport, Settings, SimConfig, run_scenario, sleep_corpus
from .synth import GroundTruth, SubjectSim, simulate_subject, synth_trace
from .world import World, WorldConfig

__all__ = [
    "ARMS",
    "AgentResponse",
    "GroundTruth",
    "ScenarioReport",
    "Settings",
    "SimConfig",
    "SubjectProfile",
    "SubjectSim",
    "World",
    "WorldConfig",
    "agent_respond",
    "compliant",
    "make_profiles",
    "run_scenario",
    "simulate_subject",
    "sleep_corpus",
    "synth_trace",
    "zero_drift",
    "zero_noise",
]
