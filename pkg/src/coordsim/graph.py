"""Shared task-graph data model: nodes, dependency edges, status labels, frontier queries.

The graph is treated as an immutable value: every mutation produces a new
graph object, so callers can hold snapshots without defensive copying.
All set-valued query results come back sorted by node id so downstream
scheduling is deterministic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum


class NodeStatus(str, Enum):
    PENDING = "pending"
    ASSIGNED = "assigned"
    IN_PROGRESS = "in_progress"
    DONE = "done"
    VERIFIED = "verified"


#: Statuses that satisfy a dependency edge. Verified nodes were done before
#: their verification pass and must not re-block dependents.
DEP_SATISFYING = frozenset({NodeStatus.DONE, NodeStatus.VERIFIED})

#: Statuses in which a node is held by some worker.
HELD_STATUSES = frozenset({NodeStatus.ASSIGNED, NodeStatus.IN_PROGRESS})

#: Terminal statuses for the run-level termination check.
FINISHED_STATUSES = frozenset({NodeStatus.DONE, NodeStatus.VERIFIED})


class UnknownNodeError(KeyError):
    """An operation referenced a node id that is not in the graph."""


@dataclass(frozen=True)
class TaskNode:
    """One subtask: identity, dependency set, and (agent, status) label.

    ``agent`` is ``None`` while the node is unassigned; pending nodes are
    always unassigned.  ``verification_of`` links a verification node back
    to the node it checks.
    """

    id: str
    title: str = ""
    description: str = ""
    deps: frozenset = frozenset()
    agent: str | None = None
    status: NodeStatus = NodeStatus.PENDING
    created_round: int = 0
    completed_round: int | None = None
    verification_of: str | None = None

    def with_label(self, agent: str | None, status: NodeStatus) -> "TaskNode":
        return replace(self, agent=agent, status=status)


@dataclass(frozen=True)
class CoordinationGraph:
    """A DAG of task nodes.  Edges are derived from per-node dependency sets:
    edge (u, v) exists iff u is in deps(v), meaning v cannot start before u
    is finished."""

    nodes: dict = field(default_factory=dict)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> TaskNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def node_ids(self) -> list:
        return sorted(self.nodes)

    def edges(self) -> list:
        """All (u, v) dependency edges in deterministic order."""
        out = []
        for vid in sorted(self.nodes):
            for uid in sorted(self.nodes[vid].deps):
                out.append((uid, vid))
        return out

    def dependents(self, node_id: str) -> list:
        """Nodes that list ``node_id`` as a dependency, sorted."""
        return sorted(v.id for v in self.nodes.values() if node_id in v.deps)

    def with_node(self, node: TaskNode) -> "CoordinationGraph":
        updated = dict(self.nodes)
        updated[node.id] = node
        return CoordinationGraph(updated)


def is_acyclic(g: CoordinationGraph) -> bool:
    """True iff the dependency relation contains no directed cycle (Kahn)."""
    indegree = {nid: len(node.deps & g.nodes.keys()) for nid, node in g.nodes.items()}
    ready = [nid for nid, deg in indegree.items() if deg == 0]
    seen = 0
    while ready:
        nid = ready.pop()
        seen += 1
        for vid in g.nodes:
            if nid in g.nodes[vid].deps:
                indegree[vid] -= 1
                if indegree[vid] == 0:
                    ready.append(vid)
    return seen == len(g.nodes)


def dependency_satisfied(g: CoordinationGraph, node_id: str) -> bool:
    """True iff every dependency of the node is done or verified."""
    node = g.node(node_id)
    return all(g.node(dep).status in DEP_SATISFYING for dep in node.deps)


def frontier(g: CoordinationGraph) -> list:
    """Pending nodes whose dependencies are all satisfied, sorted by id."""
    return [
        nid
        for nid in sorted(g.nodes)
        if g.nodes[nid].status is NodeStatus.PENDING and dependency_satisfied(g, nid)
    ]


def claimable(g: CoordinationGraph, worker: str) -> list:
    """Nodes the given worker may claim: the frontier plus dependency-satisfied
    nodes already assigned to that worker."""
    out = set(frontier(g))
    for nid in g.nodes:
        node = g.nodes[nid]
        if (
            node.status is NodeStatus.ASSIGNED
            and node.agent == worker
            and dependency_satisfied(g, nid)
        ):
            out.add(nid)
    return sorted(out)


def to_records(g: CoordinationGraph) -> list:
    """One plain-dict record per node, sorted by id, suitable for JSON export."""
    records = []
    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        records.append(
            {
                "id": node.id,
                "title": node.title,
                "description": node.description,
                "deps": sorted(node.deps),
                "agent": node.agent,
                "status": node.status.value,
                "created_round": node.created_round,
                "completed_round": node.completed_round,
                "verification_of": node.verification_of,
            }
        )
    return records


def from_records(records: list) -> CoordinationGraph:
    nodes = {}
    for rec in records:
        nodes[rec["id"]] = TaskNode(
            id=rec["id"],
            title=rec.get("title", ""),
            description=rec.get("description", ""),
            deps=frozenset(rec.get("deps", [])),
            agent=rec.get("agent"),
            status=NodeStatus(rec["status"]),
            created_round=rec.get("created_round", 0),
            completed_round=rec.get("completed_round"),
            verification_of=rec.get("verification_of"),
        )
    return CoordinationGraph(nodes)


def structural_hash(g: CoordinationGraph) -> str:
    """Stable hash of the full graph state (structure and labels)."""
    payload = json.dumps(to_records(g), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


_DOT_COLORS = {
    NodeStatus.PENDING: "white",
    NodeStatus.ASSIGNED: "lightyellow",
    NodeStatus.IN_PROGRESS: "lightblue",
    NodeStatus.DONE: "lightgreen",
    NodeStatus.VERIFIED: "green",
}


def to_dot(g: CoordinationGraph) -> str:
    """Graphviz export of the current graph, statuses encoded as fill colors."""
    lines = ["digraph coordination {", "  rankdir=LR;"]
    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        label = f"{nid}\\n{node.status.value}"
        if node.agent:
            label += f"\\n@{node.agent}"
        lines.append(
            f'  "{nid}" [label="{label}", style=filled,'
            f' fillcolor="{_DOT_COLORS[node.status]}"];'
        )
    for uid, vid in g.edges():
        lines.append(f'  "{uid}" -> "{vid}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
