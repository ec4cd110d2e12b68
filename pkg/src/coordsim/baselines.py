"""Coordination mode definitions.

Every mode is a declarative bundle: whether a shared task graph exists,
which operators are frozen after planning, how workers are dispatched,
and which scripted policies drive the agents.  The engine consumes the
bundle without branching on mode names, so modes differ only where the
design says they differ.
"""

from __future__ import annotations

from dataclasses import dataclass

from .mutation import (
    KIND_CLAIM,
    KIND_DISCOVER,
    KIND_RELEASE,
    KIND_VERIFY,
)
from .scenario import (
    BroadcastLeadPolicy,
    DynamicLeadPolicy,
    DynamicWorkerPolicy,
    HintedWorkerPolicy,
    PeerPolicy,
    StaticLeadPolicy,
    StaticWorkerPolicy,
)


@dataclass(frozen=True)
class ModeConfig:
    name: str
    uses_graph: bool
    worker_policy: object
    lead_policy: object = None
    peer_team: bool = False
    dispatch_all_workers: bool = False
    allow_direct_start: bool = False
    disabled_after_planning: frozenset = frozenset()


def dynamic_mode() -> ModeConfig:
    """Full coordination: evolving graph, self-claiming workers, heartbeat
    recovery, selective verification."""
    return ModeConfig(
        name="dynamic",
        uses_graph=True,
        lead_policy=DynamicLeadPolicy,
        worker_policy=DynamicWorkerPolicy,
    )


def static_mode() -> ModeConfig:
    """Plan-once ablation: the full graph is fixed during planning, work is
    assigned round-robin, and the adaptive operators are frozen."""
    return ModeConfig(
        name="static",
        uses_graph=True,
        lead_policy=StaticLeadPolicy,
        worker_policy=StaticWorkerPolicy,
        dispatch_all_workers=True,
        allow_direct_start=True,
        disabled_after_planning=frozenset(
            {KIND_DISCOVER, KIND_RELEASE, KIND_VERIFY, KIND_CLAIM}
        ),
    )


def leader_worker_mode() -> ModeConfig:
    """No shared graph: a lead broadcasts per-round target hints and workers
    follow them, coordinating only through messages."""
    return ModeConfig(
        name="leader_worker",
        uses_graph=False,
        lead_policy=BroadcastLeadPolicy,
        worker_policy=HintedWorkerPolicy,
        dispatch_all_workers=True,
    )


def decentralized_mode() -> ModeConfig:
    """No shared graph and no lead: symmetric peers pick work by private
    preference order and broadcast status lines."""
    return ModeConfig(
        name="decentralized",
        uses_graph=False,
        worker_policy=PeerPolicy,
        peer_team=True,
        dispatch_all_workers=True,
    )


MODES = {
    "dynamic": dynamic_mode,
    "static": static_mode,
    "leader_worker": leader_worker_mode,
    "decentralized": decentralized_mode,
}


def get_mode(name: str) -> ModeConfig:
    try:
        return MODES[name]()
    except KeyError:
        raise ValueError(
            f"unknown mode {name!r}; expected one of {sorted(MODES)}"
        ) from None
