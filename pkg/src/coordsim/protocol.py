"""Round-based orchestration: planning, heartbeat monitoring, dispatch,
serialized operator application, and termination.

Agent policies within a round are mutually independent: each sees an
immutable graph snapshot plus its private mailbox, and every mutation is
applied by the single serializer between agent phases (lead first, then
workers in canonical name order).  The engine therefore runs agents
sequentially without changing any observable trace.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

from . import metrics as metrics_mod
from .graph import (
    CoordinationGraph,
    FINISHED_STATUSES,
    HELD_STATUSES,
    frontier,
    structural_hash,
)
from .mutation import (
    KIND_CLAIM,
    KIND_CLOSE,
    KIND_COMPLETE,
    KIND_DISCOVER,
    KIND_RELEASE,
    KIND_VERIFY,
    REJECT_MODE_DISABLED,
    ROLE_LEAD,
    ROLE_WORKER,
    AgentId,
    MutationOp,
    apply,
    promote_verified,
    start_assigned,
    verification_id,
)
from .scenario import (
    ArtifactState,
    LeadContext,
    MessageAction,
    NodeView,
    OpAction,
    PlanContext,
    PoolContext,
    PoolTaskView,
    ScenarioSpec,
    StartAction,
    TaskRuntime,
    WorkerContext,
    WriteAction,
    generate,
)
from .workspace import Workspace

ORCHESTRATOR = "orchestrator"


class EmptyPlanError(RuntimeError):
    """Planning produced zero nodes; the run cannot start."""


@dataclass(frozen=True)
class ProtocolConfig:
    max_rounds: int = 40
    heartbeat_threshold: int = 4
    workers: int = 4
    planning_turns: int = 5
    lead_mailbox_cap: int = 10
    worker_mailbox_cap: int = 20

    def validate(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.heartbeat_threshold < 1:
            raise ValueError("heartbeat_threshold must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.planning_turns < 1:
            raise ValueError("planning_turns must be >= 1")


class RoundTrace:
    """Append-only event log; the single source for metrics and replay."""

    def __init__(self, events: list | None = None):
        self.events: list = events if events is not None else []

    def append(self, **event) -> None:
        self.events.append(event)

    def of_type(self, event_type: str) -> list:
        return [e for e in self.events if e["type"] == event_type]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n"
            for e in self.events
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "RoundTrace":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])


@dataclass
class RunResult:
    completed: bool
    rounds_used: int
    graph: CoordinationGraph
    trace: RoundTrace
    workspace: Workspace
    report: "metrics_mod.MetricsReport"


class Engine:
    """One seeded run of one coordination mode."""

    def __init__(self, config: ProtocolConfig, spec: ScenarioSpec, mode):
        config.validate()
        spec.validate()
        self.config = config
        self.spec = spec
        self.mode = mode
        self.tree = generate(spec)
        self.runtime = TaskRuntime(self.tree, spec)

        if mode.peer_team:
            self.lead = None
            names = [f"p{i:02d}" for i in range(1, config.workers + 2)]
        else:
            self.lead = AgentId("lead", ROLE_LEAD)
            names = [f"w{i:02d}" for i in range(1, config.workers + 1)]
        self.workers = tuple(AgentId(n, ROLE_WORKER) for n in sorted(names))
        self.worker_names = frozenset(w.name for w in self.workers)
        self.team = ((self.lead,) if self.lead else ()) + self.workers
        self.speeds = {
            w.name: spec.worker_speeds[i % len(spec.worker_speeds)]
            for i, w in enumerate(self.workers)
        }

        self.policies = {}
        if self.lead is not None and mode.lead_policy is not None:
            self.policies[self.lead.name] = mode.lead_policy(
                self.lead, self.runtime, spec, tuple(w.name for w in self.workers)
            )
        for w in self.workers:
            self.policies[w.name] = mode.worker_policy(
                w, self.runtime, spec, self.speeds[w.name]
            )

        self.graph = CoordinationGraph()
        self.version = 0
        self.workspace = Workspace()
        self.trace = RoundTrace()
        self.mailboxes = {
            a.name: deque(
                maxlen=config.lead_mailbox_cap
                if a.role == ROLE_LEAD
                else config.worker_mailbox_cap
            )
            for a in self.team
        }
        self.silent_since = {w.name: None for w in self.workers}
        self.last_lead_dispatch = 0
        self.t = 0
        self.completed = False
        # previous-round facts driving this round's lead trigger / assign rule
        self._version_checkpoint = 0
        self.prev_changed = False
        self.prev_flags = False
        self.prev_claims = 0
        self.prev_frontier = 0

    # ------------------------------------------------------------------
    # phases

    def plan(self) -> None:
        """Phase 0: the lead seeds the initial graph via Discover only."""
        if not self.mode.uses_graph:
            self.trace.append(type="planning", round=0, seeded_nodes=0, turns_used=0)
            return
        policy = self.policies[self.lead.name]
        turns_used = 0
        for turn in range(1, self.config.planning_turns + 1):
            actions = policy.plan_turn(PlanContext(turn=turn, graph=self.graph))
            if not actions:
                break
            turns_used = turn
            for act in actions:
                if isinstance(act, OpAction) and act.op.kind == KIND_DISCOVER:
                    self._apply_op(act.op, 0)
                elif isinstance(act, OpAction):
                    self._record_op(act.op, 0, False, "planning-restricted")
        if len(self.graph) == 0:
            raise EmptyPlanError("lead produced no nodes during planning")
        self.trace.append(
            type="planning",
            round=0,
            seeded_nodes=len(self.graph),
            turns_used=turns_used,
        )
        self.prev_changed = self.version != self._version_checkpoint
        self._version_checkpoint = self.version

    def heartbeat_scan(self, t: int) -> list:
        """Flag workers that have held a node in silence for H straight rounds."""
        flags = []
        h = self.config.heartbeat_threshold
        for w in self.workers:
            since = self.silent_since[w.name]
            if since is None or t - since < h:
                continue
            held = self._held_nodes(w.name)
            if not held:
                continue
            node_id = held[0]
            flags.append((w.name, node_id))
            self.trace.append(type="heartbeat", round=t, agent=w.name, node=node_id)
            if self.lead is not None:
                self._deliver(t, ORCHESTRATOR, self.lead.name,
                              f"heartbeat:{w.name}:{node_id}")
        return flags

    def dispatch(self, t: int, frontier_ids: list) -> list:
        """Decide who acts this round; returns (agent, reason, offer) triples."""
        plan = []
        if self.mode.uses_graph:
            busy = [w for w in self.workers if self._held_nodes(w.name)]
            idle = [w for w in self.workers if not self._held_nodes(w.name)]
            if self.lead is not None and self._lead_trigger(t):
                plan.append((self.lead, "lead", None))
                self.last_lead_dispatch = t
            if self.mode.dispatch_all_workers:
                for w in self.workers:
                    plan.append((w, "all", None))
            else:
                for w in busy:
                    plan.append((w, "busy", None))
                for w, nid in zip(idle, frontier_ids):
                    plan.append((w, "offer", nid))
        else:
            if self.lead is not None:
                plan.append((self.lead, "all", None))
                self.last_lead_dispatch = t
            for w in self.workers:
                plan.append((w, "all", None))
        for agent, reason, offer in plan:
            self.trace.append(
                type="dispatch", round=t, agent=agent.name, reason=reason, offer=offer
            )
        return plan

    def _lead_trigger(self, t: int) -> bool:
        return (
            self.prev_changed
            or self.prev_flags
            or t - self.last_lead_dispatch >= self.config.heartbeat_threshold
        )

    def step_round(self) -> None:
        t = self.t + 1
        self.t = t
        flags = self.heartbeat_scan(t) if self.mode.uses_graph else []
        frontier_ids = frontier(self.graph) if self.mode.uses_graph else []
        idle_count = sum(1 for w in self.workers if not self._held_nodes(w.name))
        plan = self.dispatch(t, frontier_ids)

        batches = []
        for agent, reason, offer in plan:
            ctx = self._build_context(agent, t, offer, frontier_ids)
            batches.append((agent, self.policies[agent.name].step(ctx)))

        acted = self.apply_phase(t, batches)

        if self.mode.uses_graph:
            for w in self.workers:
                if not self._held_nodes(w.name) or w.name in acted:
                    self.silent_since[w.name] = None
                elif self.silent_since[w.name] is None:
                    self.silent_since[w.name] = t

        self.trace.append(
            type="round_end",
            round=t,
            frontier_size=len(frontier_ids),
            idle_workers=idle_count,
            graph_version=self.version,
        )
        self.prev_changed = self.version != self._version_checkpoint
        self._version_checkpoint = self.version
        self.prev_flags = bool(flags)
        self.prev_frontier = len(frontier_ids)
        self.completed = self._terminated()

    def apply_phase(self, t: int, batches: list) -> set:
        """Serialize all emitted actions: lead first, then workers in canonical
        order; within an agent, emission order.  Returns the set of agents
        that emitted at least one action."""
        order = {a.name: (0 if a.role == ROLE_LEAD else 1, a.name) for a in self.team}
        batches = sorted(batches, key=lambda pair: order[pair[0].name])
        acted = set()
        claims_accepted = 0
        finished_verifications = []
        for agent, actions in batches:
            for act in actions:
                if isinstance(act, OpAction):
                    acted.add(agent.name)
                    op = act.op
                    if op.kind in self.mode.disabled_after_planning:
                        self._record_op(op, t, False, REJECT_MODE_DISABLED)
                        continue
                    accepted = self._apply_op(op, t)
                    if accepted:
                        if op.kind == KIND_CLAIM:
                            claims_accepted += 1
                            self.runtime.begin_attempt(op.target, agent.name)
                        elif op.kind == KIND_RELEASE:
                            self.runtime.release(op.target)
                        elif op.kind == KIND_VERIFY:
                            self.runtime.register_verification(
                                verification_id(op.target), op.target
                            )
                        elif op.kind in (KIND_COMPLETE, KIND_CLOSE):
                            self.runtime.release(op.target)
                            if self.graph.node(op.target).verification_of is not None:
                                finished_verifications.append(op.target)
                    elif op.kind == KIND_CLAIM:
                        self._deliver(
                            t, ORCHESTRATOR, agent.name, f"claim-rejected:{op.target}"
                        )
                elif isinstance(act, StartAction):
                    acted.add(agent.name)
                    self._apply_start(act.node, agent, t)
                elif isinstance(act, WriteAction):
                    acted.add(agent.name)
                    rec = self.workspace.write(
                        act.artifact, agent.name, t, act.start, act.length
                    )
                    self.trace.append(type="write", **rec.to_dict())
                elif isinstance(act, MessageAction):
                    acted.add(agent.name)
                    if act.recipient == "*":
                        for other in self.team:
                            if other.name != agent.name:
                                self._deliver(t, agent.name, other.name, act.text)
                    else:
                        self._deliver(t, agent.name, act.recipient, act.text)
        for ver_id in finished_verifications:
            self.graph = promote_verified(self.graph, ver_id)
            self.version += 1
            self.trace.append(type="promote", round=t, target=ver_id)
        self.prev_claims = claims_accepted
        return acted

    def run(self) -> RunResult:
        self.plan()
        while self.t < self.config.max_rounds and not self.completed:
            self.step_round()
        self.trace.append(
            type="run_end",
            round=self.t,
            completed=self.completed,
            rounds_used=self.t,
            mode=self.mode.name,
            team_size=len(self.team),
            has_lead=self.lead is not None,
            final_graph_hash=structural_hash(self.graph),
        )
        report = metrics_mod.compute(self.trace, self.graph, self.workspace)
        return RunResult(
            completed=self.completed,
            rounds_used=self.t,
            graph=self.graph,
            trace=self.trace,
            workspace=self.workspace,
            report=report,
        )

    # ------------------------------------------------------------------
    # helpers

    def _held_nodes(self, worker: str) -> list:
        return sorted(
            nid
            for nid, node in self.graph.nodes.items()
            if node.agent == worker and node.status in HELD_STATUSES
        )

    def _terminated(self) -> bool:
        if self.mode.uses_graph:
            return len(self.graph) > 0 and all(
                node.status in FINISHED_STATUSES for node in self.graph.nodes.values()
            )
        return all(
            self.workspace.content_length(task.artifact) >= task.artifact_len
            for task in self.tree.tasks.values()
        )

    def _artifact_target(self, node_id: str) -> tuple:
        """(artifact name, target length) for a graph node."""
        if node_id in self.runtime.verifications:
            parent = self.tree.tasks[self.runtime.verifications[node_id]]
            return parent.artifact, parent.artifact_len
        task = self.tree.tasks[node_id]
        return task.artifact, task.artifact_len

    def _build_context(self, agent: AgentId, t: int, offer, frontier_ids: list):
        mailbox = tuple(self.mailboxes[agent.name])
        self.mailboxes[agent.name].clear()
        if not self.mode.uses_graph:
            views = tuple(
                PoolTaskView(
                    id=tid,
                    artifact=self.tree.tasks[tid].artifact,
                    complete=self.workspace.content_length(self.tree.tasks[tid].artifact)
                    >= self.tree.tasks[tid].artifact_len,
                )
                for tid in sorted(self.runtime.revealed)
            )
            return PoolContext(agent=agent.name, round=t, mailbox=mailbox, tasks=views)
        if agent.role == ROLE_LEAD:
            flags = []
            for msg in mailbox:
                if msg.startswith("heartbeat:"):
                    _, worker, node = msg.split(":", 2)
                    flags.append((worker, node))
            artifact_complete = {}
            for nid in self.graph.nodes:
                name, target = self._artifact_target(nid)
                artifact_complete[nid] = self.workspace.content_length(name) >= target
            idle = tuple(
                w.name for w in self.workers if not self._held_nodes(w.name)
            )
            return LeadContext(
                round=t,
                graph=self.graph,
                mailbox=mailbox,
                flags=tuple(sorted(set(flags))),
                artifact_complete=artifact_complete,
                prev_frontier=self.prev_frontier,
                prev_claims=self.prev_claims,
                idle_workers=idle,
                frontier=tuple(frontier_ids),
            )
        held = []
        artifacts = {}
        preds = []
        for nid in self._held_nodes(agent.name):
            node = self.graph.node(nid)
            held.append(
                NodeView(
                    id=nid,
                    title=node.title,
                    description=node.description,
                    status=node.status,
                    agent=node.agent,
                )
            )
            name, target = self._artifact_target(nid)
            artifacts[nid] = ArtifactState(
                name=name, written=self.workspace.content_length(name), target=target
            )
            for dep in sorted(node.deps):
                preds.append(f"{dep}: {self.graph.node(dep).status.value}")
        return WorkerContext(
            agent=agent.name,
            round=t,
            held=tuple(held),
            predecessors=tuple(preds),
            offer=offer,
            mailbox=mailbox,
            artifacts=artifacts,
        )

    def _apply_op(self, op: MutationOp, t: int) -> bool:
        g2, outcome = apply(
            self.graph, op, t, self.version, workers=self.worker_names
        )
        self.graph = g2
        self.version = outcome.graph_version
        self._record_op(op, t, outcome.accepted, outcome.reason)
        return outcome.accepted

    def _record_op(self, op: MutationOp, t: int, accepted: bool, reason) -> None:
        self.trace.append(
            type="op",
            round=t,
            caller=op.caller.name,
            role=op.caller.role,
            kind=op.kind,
            target=op.target,
            deps=sorted(op.deps),
            title=op.title,
            description=op.description,
            assignee=op.assignee,
            accepted=accepted,
            reason=reason,
        )

    def _apply_start(self, node_id: str, agent: AgentId, t: int) -> None:
        if not self.mode.allow_direct_start:
            self.trace.append(
                type="start", round=t, target=node_id, agent=agent.name, accepted=False
            )
            return
        try:
            self.graph = start_assigned(self.graph, node_id, agent.name)
        except (KeyError, ValueError):
            self.trace.append(
                type="start", round=t, target=node_id, agent=agent.name, accepted=False
            )
            return
        self.version += 1
        self.runtime.begin_attempt(node_id, agent.name)
        self.trace.append(
            type="start", round=t, target=node_id, agent=agent.name, accepted=True
        )

    def _deliver(self, t: int, sender: str, recipient: str, text: str) -> None:
        if recipient in self.mailboxes:
            self.mailboxes[recipient].append(text)
        self.trace.append(
            type="message",
            round=t,
            sender=sender,
            recipient=recipient,
            chars=len(text),
            text=text,
        )


def run(config: ProtocolConfig, spec: ScenarioSpec, mode) -> RunResult:
    """Execute one seeded run of the given mode to completion or timeout."""
    return Engine(config, spec, mode).run()


def replay(trace: RoundTrace) -> CoordinationGraph:
    """Rebuild the final graph by replaying the committed transition sequence
    (accepted operators, direct starts, verified promotions) from empty."""
    g = CoordinationGraph()
    version = 0
    for event in trace.events:
        if event["type"] == "op" and event["accepted"]:
            op = MutationOp(
                kind=event["kind"],
                target=event["target"],
                caller=AgentId(event["caller"], event["role"]),
                title=event.get("title", ""),
                description=event.get("description", ""),
                deps=tuple(event.get("deps", [])),
                assignee=event.get("assignee"),
            )
            g, outcome = apply(g, op, event["round"], version)
            if not outcome.accepted:
                raise ValueError(
                    f"replay diverged: {event['kind']} {event['target']} "
                    f"rejected with {outcome.reason}"
                )
            version = outcome.graph_version
        elif event["type"] == "start" and event.get("accepted"):
            g = start_assigned(g, event["target"], event["agent"])
        elif event["type"] == "promote":
            g = promote_verified(g, event["target"])
    return g
