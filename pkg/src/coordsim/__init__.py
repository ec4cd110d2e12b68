"""Deterministic simulator for coordinated multi-agent task execution on a
shared, evolving task graph."""

from .baselines import MODES, get_mode
from .graph import CoordinationGraph, NodeStatus, TaskNode, claimable, frontier
from .metrics import MetricsReport, aggregate, compute
from .mutation import AgentId, MutationOp, OpOutcome, apply
from .protocol import Engine, ProtocolConfig, RoundTrace, RunResult, replay, run
from .scenario import HiddenTree, ScenarioSpec, generate
from .workspace import Workspace

__version__ = "0.1.0"

__all__ = [
    "AgentId",
    "CoordinationGraph",
    "Engine",
    "HiddenTree",
    "MODES",
    "MetricsReport",
    "MutationOp",
    "NodeStatus",
    "OpOutcome",
    "ProtocolConfig",
    "RoundTrace",
    "RunResult",
    "ScenarioSpec",
    "TaskNode",
    "Workspace",
    "aggregate",
    "apply",
    "claimable",
    "compute",
    "frontier",
    "generate",
    "get_mode",
    "replay",
    "run",
]
