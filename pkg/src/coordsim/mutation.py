"""The seven graph mutation operators with caller permissions, preconditions,
and postconditions, plus the engine-side transitions that close the gaps the
operator set leaves open (verified promotion, direct start of assigned work).

``apply`` is a pure state transition: a rejected op returns the input graph
unchanged, so callers can rely on atomicity without rollback machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .graph import (
    CoordinationGraph,
    NodeStatus,
    TaskNode,
    claimable,
    is_acyclic,
)

ROLE_LEAD = "lead"
ROLE_WORKER = "worker"


@dataclass(frozen=True, order=True)
class AgentId:
    name: str
    role: str


KIND_DISCOVER = "Discover"
KIND_ASSIGN = "Assign"
KIND_CLAIM = "Claim"
KIND_COMPLETE = "Complete"
KIND_RELEASE = "Release"
KIND_CLOSE = "Close"
KIND_VERIFY = "Verify"

ALL_KINDS = (
    KIND_DISCOVER,
    KIND_ASSIGN,
    KIND_CLAIM,
    KIND_COMPLETE,
    KIND_RELEASE,
    KIND_CLOSE,
    KIND_VERIFY,
)

#: Which roles may invoke each operator kind.
CALLER_ROLES = {
    KIND_DISCOVER: frozenset({ROLE_LEAD, ROLE_WORKER}),
    KIND_ASSIGN: frozenset({ROLE_LEAD}),
    KIND_CLAIM: frozenset({ROLE_WORKER}),
    KIND_COMPLETE: frozenset({ROLE_WORKER}),
    KIND_RELEASE: frozenset({ROLE_LEAD}),
    KIND_CLOSE: frozenset({ROLE_LEAD}),
    KIND_VERIFY: frozenset({ROLE_LEAD}),
}

# Rejection codes; each names the violated precondition.
REJECT_NOT_AUTHORIZED = "not-authorized"
REJECT_UNKNOWN_NODE = "unknown-node"
REJECT_DUPLICATE_NODE = "duplicate-node"
REJECT_WOULD_CREATE_CYCLE = "would-create-cycle"
REJECT_BAD_STATUS = "bad-status"
REJECT_NOT_CLAIMABLE = "not-claimable"
REJECT_NOT_OWNER = "not-owner"
REJECT_DUPLICATE_VERIFICATION = "duplicate-verification"
# Issued by the orchestrator, not by apply(): the run mode forbids the kind.
REJECT_MODE_DISABLED = "mode-disabled"

VERIFY_SUFFIX = "::verify"


def verification_id(parent_id: str) -> str:
    """Deterministic id of the verification node spawned for ``parent_id``."""
    return parent_id + VERIFY_SUFFIX


@dataclass(frozen=True)
class MutationOp:
    """One operator invocation: kind, target node, caller, kind-specific payload."""

    kind: str
    target: str
    caller: AgentId
    title: str = ""
    description: str = ""
    deps: tuple = ()
    assignee: str | None = None


@dataclass(frozen=True)
class OpOutcome:
    accepted: bool
    reason: str | None
    graph_version: int


class NotVerificationNodeError(ValueError):
    """promote_verified was invoked on a node that is not a completed
    verification node."""


class ParentNotDoneError(ValueError):
    """promote_verified was invoked while the verified node is not done."""


def apply(
    g: CoordinationGraph,
    op: MutationOp,
    round_index: int,
    version: int = 0,
    workers: frozenset | None = None,
) -> tuple:
    """Validate and apply one operator.

    Returns ``(graph, outcome)``.  On rejection the input graph is returned
    unchanged and ``outcome.reason`` carries the rejection code; on acceptance
    the version counter is advanced.  ``workers`` is the worker-name roster,
    used to validate Assign targets when supplied.
    """
    reason = _check(g, op, workers)
    if reason is not None:
        return g, OpOutcome(False, reason, version)
    return _commit(g, op, round_index), OpOutcome(True, None, version + 1)


def _check(g: CoordinationGraph, op: MutationOp, workers: frozenset | None) -> str | None:
    if op.caller.role not in CALLER_ROLES.get(op.kind, frozenset()):
        return REJECT_NOT_AUTHORIZED

    if op.kind == KIND_DISCOVER:
        if op.target in g:
            return REJECT_DUPLICATE_NODE
        if any(dep not in g for dep in op.deps):
            return REJECT_UNKNOWN_NODE
        candidate = g.with_node(
            TaskNode(id=op.target, deps=frozenset(op.deps))
        )
        if not is_acyclic(candidate):
            return REJECT_WOULD_CREATE_CYCLE
        return None

    if op.target not in g:
        return REJECT_UNKNOWN_NODE
    node = g.node(op.target)

    if op.kind == KIND_ASSIGN:
        if op.assignee is None or op.assignee == op.caller.name:
            return REJECT_NOT_AUTHORIZED
        if workers is not None and op.assignee not in workers:
            return REJECT_NOT_AUTHORIZED
        if node.status is not NodeStatus.PENDING:
            return REJECT_BAD_STATUS
    elif op.kind == KIND_CLAIM:
        if op.target not in claimable(g, op.caller.name):
            return REJECT_NOT_CLAIMABLE
    elif op.kind == KIND_COMPLETE:
        if node.status is not NodeStatus.IN_PROGRESS:
            return REJECT_BAD_STATUS
        if node.agent != op.caller.name:
            return REJECT_NOT_OWNER
    elif op.kind in (KIND_RELEASE, KIND_CLOSE):
        if node.status not in (NodeStatus.ASSIGNED, NodeStatus.IN_PROGRESS):
            return REJECT_BAD_STATUS
    elif op.kind == KIND_VERIFY:
        if node.status is not NodeStatus.DONE:
            return REJECT_BAD_STATUS
        if verification_id(op.target) in g:
            return REJECT_DUPLICATE_VERIFICATION
    return None


def _commit(g: CoordinationGraph, op: MutationOp, round_index: int) -> CoordinationGraph:
    if op.kind == KIND_DISCOVER:
        return g.with_node(
            TaskNode(
                id=op.target,
                title=op.title,
                description=op.description,
                deps=frozenset(op.deps),
                created_round=round_index,
            )
        )

    node = g.node(op.target)
    if op.kind == KIND_ASSIGN:
        node = node.with_label(op.assignee, NodeStatus.ASSIGNED)
    elif op.kind == KIND_CLAIM:
        node = node.with_label(op.caller.name, NodeStatus.IN_PROGRESS)
    elif op.kind == KIND_COMPLETE:
        node = replace(
            node.with_label(op.caller.name, NodeStatus.DONE),
            completed_round=round_index,
        )
    elif op.kind == KIND_RELEASE:
        node = node.with_label(None, NodeStatus.PENDING)
    elif op.kind == KIND_CLOSE:
        node = replace(
            node.with_label(node.agent, NodeStatus.DONE),
            completed_round=round_index,
        )
    elif op.kind == KIND_VERIFY:
        ver = TaskNode(
            id=verification_id(op.target),
            title=f"verify {op.target}",
            description=f"check the output of {op.target}",
            deps=frozenset({op.target}),
            created_round=round_index,
            verification_of=op.target,
        )
        return g.with_node(ver)
    return g.with_node(node)


def promote_verified(g: CoordinationGraph, ver_id: str) -> CoordinationGraph:
    """Promote the parent of a completed verification node to ``verified``.

    Idempotent when the parent is already verified.  This is the only
    transition that produces the ``verified`` status; the protocol invokes
    it automatically after a verification node completes.
    """
    if ver_id not in g:
        raise NotVerificationNodeError(f"{ver_id} is not in the graph")
    ver = g.node(ver_id)
    if ver.verification_of is None:
        raise NotVerificationNodeError(f"{ver_id} is not a verification node")
    if ver.status is not NodeStatus.DONE:
        raise NotVerificationNodeError(f"{ver_id} has status {ver.status.value}, not done")
    parent = g.node(ver.verification_of)
    if parent.status is NodeStatus.VERIFIED:
        return g
    if parent.status is not NodeStatus.DONE:
        raise ParentNotDoneError(
            f"{parent.id} has status {parent.status.value}, not done"
        )
    return g.with_node(replace(parent, status=NodeStatus.VERIFIED))


def start_assigned(g: CoordinationGraph, node_id: str, worker: str) -> CoordinationGraph:
    """Move an assigned node directly to in_progress for its holder.

    Used by the static mode, where self-claiming is disabled and workers
    begin their assignments without a claim step.
    """
    node = g.node(node_id)
    if node.status is not NodeStatus.ASSIGNED or node.agent != worker:
        raise ValueError(f"{node_id} is not assigned to {worker}")
    return g.with_node(node.with_label(worker, NodeStatus.IN_PROGRESS))
