"""Seeded synthetic workloads and scripted agent policies.

A scenario is a hidden ground-truth task tree: root tasks are known up
front, deeper tasks are revealed only while their parent is being
executed.  Scripted Lead/Worker policies stand in for live agents and
inject faults (stalls, premature completions, declined offers) so the
coordination machinery has something to recover from.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass

from .graph import CoordinationGraph, NodeStatus
from .mutation import (
    KIND_ASSIGN,
    KIND_CLAIM,
    KIND_CLOSE,
    KIND_COMPLETE,
    KIND_DISCOVER,
    KIND_RELEASE,
    KIND_VERIFY,
    AgentId,
    MutationOp,
    verification_id,
)


class InvalidParameterError(ValueError):
    """A scenario parameter is outside its legal range."""


# ---------------------------------------------------------------------------
# Hidden task tree


@dataclass(frozen=True)
class HiddenTask:
    id: str
    duration: int
    artifact: str
    artifact_len: int
    deps: tuple  # prerequisite ids, subset of {parent}
    children: tuple  # child task ids revealed during execution
    reveal_after: int  # units of parent progress before this task surfaces
    depth: int


@dataclass(frozen=True)
class HiddenTree:
    tasks: dict
    roots: tuple

    def total_work(self) -> int:
        return sum(t.duration for t in self.tasks.values())

    def structural_hash(self) -> str:
        payload = json.dumps(
            [
                {
                    "id": t.id,
                    "duration": t.duration,
                    "artifact": t.artifact,
                    "artifact_len": t.artifact_len,
                    "deps": list(t.deps),
                    "children": list(t.children),
                    "reveal_after": t.reveal_after,
                    "depth": t.depth,
                }
                for t in (self.tasks[tid] for tid in sorted(self.tasks))
            ],
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    roots: int = 8
    depth: int = 3
    branching: int = 2
    duration_choices: tuple = (2, 3, 4)
    chars_per_unit: int = 40
    initial_visible_fraction: float = 0.45
    stall_prob: float = 0.05
    stall_rounds: tuple = (8, 14)
    false_complete_prob: float = 0.02
    decline_prob: float = 0.05
    worker_speeds: tuple = (2.0, 1.0, 1.0, 0.5)
    # (worker name, round): force the worker silent from that round onward.
    forced_silence: tuple | None = None

    def validate(self) -> None:
        if self.roots < 1:
            raise InvalidParameterError("roots must be >= 1")
        if self.depth < 1:
            raise InvalidParameterError("depth must be >= 1")
        if self.branching < 0:
            raise InvalidParameterError("branching must be >= 0")
        if not self.duration_choices or any(d < 1 for d in self.duration_choices):
            raise InvalidParameterError("duration_choices must be positive")
        if self.chars_per_unit < 1:
            raise InvalidParameterError("chars_per_unit must be >= 1")
        if not 0.0 < self.initial_visible_fraction <= 1.0:
            raise InvalidParameterError("initial_visible_fraction must be in (0, 1]")
        for name in ("stall_prob", "false_complete_prob", "decline_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidParameterError(f"{name} must be in [0, 1]")
        lo, hi = self.stall_rounds
        if lo < 1 or hi < lo:
            raise InvalidParameterError("stall_rounds must be a positive range")
        if not self.worker_speeds or any(s <= 0 for s in self.worker_speeds):
            raise InvalidParameterError("worker_speeds must be positive")


def generate(spec: ScenarioSpec) -> HiddenTree:
    """Deterministically expand the hidden tree from the scenario seed."""
    spec.validate()
    rng = random.Random(f"{spec.seed}/tree")
    tasks: dict = {}
    counter = 0

    def next_id() -> str:
        nonlocal counter
        counter += 1
        return f"t{counter:03d}"

    queue = []
    for _ in range(spec.roots):
        queue.append((next_id(), 0, None))

    while queue:
        tid, depth, parent = queue.pop(0)
        duration = rng.choice(spec.duration_choices)
        n_children = rng.randint(0, spec.branching) if depth < spec.depth - 1 else 0
        child_ids = []
        child_specs = []
        for _ in range(n_children):
            cid = next_id()
            reveal_after = rng.randint(1, duration)
            requires_parent = rng.random() < 0.5
            child_ids.append(cid)
            child_specs.append((cid, reveal_after, requires_parent))
        if parent is None:
            deps: tuple = ()
            reveal_after_self = 0
        else:
            deps, reveal_after_self = parent
        tasks[tid] = HiddenTask(
            id=tid,
            duration=duration,
            artifact=f"art-{tid}",
            artifact_len=duration * spec.chars_per_unit,
            deps=deps,
            children=tuple(child_ids),
            reveal_after=reveal_after_self,
            depth=depth,
        )
        for cid, reveal_after, requires_parent in child_specs:
            child_deps = (tid,) if requires_parent else ()
            queue.append(((cid), depth + 1, (child_deps, reveal_after)))

    roots = tuple(sorted(t.id for t in tasks.values() if t.depth == 0))
    return HiddenTree(tasks=tasks, roots=roots)


# ---------------------------------------------------------------------------
# Execution runtime: progress, reveals, attempts


@dataclass
class Attempt:
    """State of one execution stretch of a node by one agent."""

    agent: str
    progress: float = 0.0
    written: int = 0
    work_rounds: int = 0
    # fault plan, drawn lazily on the first work round
    planned: bool = False
    stall_point: int = -1
    stall_len: int = 0
    stall_taken: bool = False
    stalled_until: int = -1
    false_complete: bool = False


@dataclass(frozen=True)
class WorkResult:
    start: int
    length: int
    finished: bool
    revealed: tuple


class TaskRuntime:
    """Hidden-execution bookkeeping shared by every coordination mode.

    Tracks per-node progress, which hidden children have surfaced, and the
    per-attempt write offsets used to produce workspace writes.
    """

    def __init__(self, tree: HiddenTree, spec: ScenarioSpec):
        self.tree = tree
        self.spec = spec
        self.max_progress = {tid: 0.0 for tid in tree.tasks}
        self.revealed = set(tree.roots)
        self.announced: set = set()
        self.attempts: dict = {}  # node id -> Attempt (graph modes)
        self.pool_attempts: dict = {}  # (task id, agent) -> Attempt
        self.verifications: dict = {}  # verification node id -> parent task id

    # -- graph-mode ownership

    def begin_attempt(self, node_id: str, agent: str) -> Attempt:
        att = Attempt(agent=agent)
        self.attempts[node_id] = att
        return att

    def release(self, node_id: str) -> None:
        self.attempts.pop(node_id, None)

    def register_verification(self, ver_id: str, parent_id: str) -> None:
        self.verifications[ver_id] = parent_id

    def task_for(self, node_id: str):
        """Hidden task backing a graph node; verification nodes map to a
        synthetic 1-unit repair task over the parent's artifact."""
        if node_id in self.verifications:
            parent = self.tree.tasks[self.verifications[node_id]]
            return HiddenTask(
                id=node_id,
                duration=1,
                artifact=parent.artifact,
                artifact_len=0,  # repairs fill gaps; no fresh content quota
                deps=(),
                children=(),
                reveal_after=0,
                depth=parent.depth,
            )
        return self.tree.tasks[node_id]

    def work(self, node_id: str, speed: float) -> WorkResult:
        """Advance the current attempt on a node by one round of work."""
        att = self.attempts[node_id]
        task = self.task_for(node_id)
        att.progress += speed
        att.work_rounds += 1
        frac = min(att.progress, task.duration) / task.duration
        should = int(task.artifact_len * frac)
        if att.progress >= task.duration:
            should = task.artifact_len
        start, length = att.written, should - att.written
        att.written = should
        finished = att.progress >= task.duration
        revealed = self._bump_progress(node_id, att.progress)
        return WorkResult(start, length, finished, revealed)

    # -- pool-mode (graph-free) execution

    def pool_attempt(self, task_id: str, agent: str) -> Attempt:
        key = (task_id, agent)
        if key not in self.pool_attempts:
            self.pool_attempts[key] = Attempt(agent=agent)
        return self.pool_attempts[key]

    def pool_work(self, task_id: str, agent: str, speed: float) -> WorkResult:
        att = self.pool_attempts[(task_id, agent)]
        task = self.tree.tasks[task_id]
        att.progress += speed
        att.work_rounds += 1
        frac = min(att.progress, task.duration) / task.duration
        should = int(task.artifact_len * frac)
        if att.progress >= task.duration:
            should = task.artifact_len
        start, length = att.written, should - att.written
        att.written = should
        finished = att.progress >= task.duration
        revealed = self._bump_progress(task_id, att.progress)
        return WorkResult(start, length, finished, revealed)

    def _bump_progress(self, task_id: str, progress: float) -> tuple:
        if task_id in self.verifications:
            return ()
        prev = self.max_progress[task_id]
        if progress <= prev:
            return ()
        self.max_progress[task_id] = progress
        newly = []
        for cid in self.tree.tasks[task_id].children:
            child = self.tree.tasks[cid]
            if cid not in self.announced and progress >= child.reveal_after:
                self.announced.add(cid)
                self.revealed.add(cid)
                newly.append(cid)
        return tuple(sorted(newly))


def work_rounds_needed(duration: int, speed: float) -> int:
    return max(1, math.ceil(duration / speed - 1e-9))


# ---------------------------------------------------------------------------
# Policy I/O vocabulary


@dataclass(frozen=True)
class OpAction:
    op: MutationOp


@dataclass(frozen=True)
class StartAction:
    """Begin an assigned node directly (static mode's claim substitute)."""

    node: str


@dataclass(frozen=True)
class MessageAction:
    recipient: str  # agent name, or "*" for broadcast
    text: str


@dataclass(frozen=True)
class WriteAction:
    artifact: str
    start: int
    length: int


@dataclass(frozen=True)
class NodeView:
    id: str
    title: str
    description: str
    status: NodeStatus
    agent: str | None


@dataclass(frozen=True)
class ArtifactState:
    name: str
    written: int
    target: int


@dataclass(frozen=True)
class WorkerContext:
    """Scoped worker view: held nodes, their direct-predecessor summaries,
    one claim offer at most, and the private mailbox.  Nothing graph-wide."""

    agent: str
    round: int
    held: tuple  # NodeView for nodes labelled with this worker
    predecessors: tuple  # "dep-id: status" summaries for held nodes' deps
    offer: str | None
    mailbox: tuple
    artifacts: dict  # held node id -> ArtifactState


@dataclass(frozen=True)
class LeadContext:
    """Scoped lead view: the graph and mailbox, plus orchestrator summaries.
    No worker execution traces."""

    round: int
    graph: CoordinationGraph
    mailbox: tuple
    flags: tuple  # (worker, node) pairs parsed from heartbeat notices
    artifact_complete: dict  # node id -> bool
    prev_frontier: int
    prev_claims: int
    idle_workers: tuple
    frontier: tuple


@dataclass(frozen=True)
class PlanContext:
    turn: int
    graph: CoordinationGraph


@dataclass(frozen=True)
class PoolTaskView:
    id: str
    artifact: str
    complete: bool


@dataclass(frozen=True)
class PoolContext:
    """Graph-free view used by leader-worker and decentralized modes."""

    agent: str
    round: int
    mailbox: tuple
    tasks: tuple  # PoolTaskView for every revealed task, sorted by id


# ---------------------------------------------------------------------------
# Policies: dynamic-graph mode


def _discover_op(caller: AgentId, task: HiddenTask, deps: tuple) -> MutationOp:
    return MutationOp(
        kind=KIND_DISCOVER,
        target=task.id,
        caller=caller,
        title=f"task {task.id}",
        description=f"produce {task.artifact} ({task.artifact_len} chars)",
        deps=deps,
    )


class GraphWorkerBase:
    """Shared execution behavior for workers in graph-backed modes."""

    def __init__(self, agent: AgentId, runtime: TaskRuntime, spec: ScenarioSpec,
                 speed: float):
        self.agent = agent
        self.runtime = runtime
        self.spec = spec
        self.speed = speed
        self.rng = random.Random(f"{spec.seed}/{agent.name}")

    def _forced_silent(self, t: int) -> bool:
        forced = self.spec.forced_silence
        return forced is not None and forced[0] == self.agent.name and t >= forced[1]

    def _plan_faults(self, att: Attempt, task: HiddenTask) -> None:
        if att.planned:
            return
        att.planned = True
        total = work_rounds_needed(task.duration, self.speed)
        if self.rng.random() < self.spec.stall_prob:
            att.stall_point = self.rng.randint(0, total)
            att.stall_len = self.rng.randint(*self.spec.stall_rounds)
        elif self.rng.random() < self.spec.false_complete_prob:
            att.false_complete = True

    def _work_held(self, node: NodeView, ctx: WorkerContext) -> list:
        t = ctx.round
        att = self.runtime.attempts.get(node.id)
        if att is None or att.agent != self.agent.name:
            return []
        task = self.runtime.task_for(node.id)
        self._plan_faults(att, task)

        if att.stalled_until >= t:
            return []
        if (
            att.stall_point == att.work_rounds
            and not att.stall_taken
            and att.stall_point >= 0
        ):
            att.stall_taken = True
            att.stalled_until = t + att.stall_len - 1
            return []

        complete_op = MutationOp(KIND_COMPLETE, node.id, self.agent)
        if att.progress >= task.duration:
            # work done earlier; only the completion signal was pending
            return [OpAction(complete_op)]

        result = self.runtime.work(node.id, self.speed)
        actions: list = []
        if result.length > 0:
            actions.append(WriteAction(task.artifact, result.start, result.length))
        for cid in result.revealed:
            child = self.runtime.tree.tasks[cid]
            actions.append(OpAction(_discover_op(self.agent, child, child.deps)))
        if att.false_complete and att.work_rounds == 1:
            actions.append(OpAction(complete_op))
        elif result.finished:
            if att.stall_point == att.work_rounds and not att.stall_taken:
                att.stall_taken = True
                att.stalled_until = t + att.stall_len - 1
            else:
                actions.append(OpAction(complete_op))
        return actions

    def _repair_and_complete(self, node: NodeView, ctx: WorkerContext) -> list:
        """Verification work: fill whatever the artifact is still missing."""
        t = ctx.round
        att = self.runtime.attempts.get(node.id)
        if att is None or att.agent != self.agent.name:
            return []
        task = self.runtime.task_for(node.id)
        att.progress += self.speed
        att.work_rounds += 1
        if att.progress < task.duration:
            return []
        actions: list = []
        state = ctx.artifacts.get(node.id)
        if state is not None and state.written < state.target:
            actions.append(
                WriteAction(state.name, state.written, state.target - state.written)
            )
        actions.append(OpAction(MutationOp(KIND_COMPLETE, node.id, self.agent)))
        return actions


class DynamicWorkerPolicy(GraphWorkerBase):
    """Self-scheduling worker: claims offered or assigned work, executes it,
    surfaces hidden subtasks, and certifies completion."""

    def step(self, ctx: WorkerContext) -> list:
        if self._forced_silent(ctx.round):
            return []
        in_progress = sorted(
            (n for n in ctx.held if n.status is NodeStatus.IN_PROGRESS),
            key=lambda n: n.id,
        )
        if in_progress:
            node = in_progress[0]
            if node.id in self.runtime.verifications:
                return self._repair_and_complete(node, ctx)
            return self._work_held(node, ctx)
        assigned = sorted(
            (n for n in ctx.held if n.status is NodeStatus.ASSIGNED),
            key=lambda n: n.id,
        )
        if assigned:
            return [OpAction(MutationOp(KIND_CLAIM, assigned[0].id, self.agent))]
        if ctx.offer is not None:
            if self.rng.random() < self.spec.decline_prob:
                return []
            return [OpAction(MutationOp(KIND_CLAIM, ctx.offer, self.agent))]
        return []


class DynamicLeadPolicy:
    """Lead: seeds part of its prior during planning, then releases or closes
    flagged work, verifies high-fanout completions, tops up the graph when
    supply runs low, and assigns surplus frontier nodes."""

    def __init__(self, agent: AgentId, runtime: TaskRuntime, spec: ScenarioSpec,
                 workers: tuple, risk_fanout: int = 2):
        self.agent = agent
        self.runtime = runtime
        self.spec = spec
        self.workers = tuple(sorted(workers))
        self.risk_fanout = risk_fanout
        self.known_roots = tuple(runtime.tree.roots)
        self.seeded: set = set()

    def _seed_count(self) -> int:
        return max(
            1, math.ceil(self.spec.initial_visible_fraction * len(self.known_roots))
        )

    def plan_turn(self, ctx: PlanContext) -> list:
        if ctx.turn > 1:
            return []
        actions = []
        for rid in self.known_roots[: self._seed_count()]:
            task = self.runtime.tree.tasks[rid]
            actions.append(OpAction(_discover_op(self.agent, task, ())))
            self.seeded.add(rid)
        return actions

    def step(self, ctx: LeadContext) -> list:
        g = ctx.graph
        actions: list = []

        # straggler handling: close finished-but-silent work, release the rest
        for worker, node_id in sorted(set(ctx.flags)):
            if node_id not in g:
                continue
            node = g.node(node_id)
            if node.agent != worker or node.status not in (
                NodeStatus.ASSIGNED,
                NodeStatus.IN_PROGRESS,
            ):
                continue
            if ctx.artifact_complete.get(node_id, False):
                actions.append(OpAction(MutationOp(KIND_CLOSE, node_id, self.agent)))
            else:
                actions.append(OpAction(MutationOp(KIND_RELEASE, node_id, self.agent)))

        # keep the graph supplied: surface more known roots when work runs low
        open_count = sum(
            1
            for nid in g.nodes
            if g.nodes[nid].status
            in (NodeStatus.PENDING, NodeStatus.ASSIGNED, NodeStatus.IN_PROGRESS)
        )
        unseeded = [r for r in self.known_roots if r not in self.seeded]
        if open_count < len(self.workers) and unseeded:
            for rid in unseeded[: len(self.workers) - open_count]:
                task = self.runtime.tree.tasks[rid]
                actions.append(OpAction(_discover_op(self.agent, task, ())))
                self.seeded.add(rid)

        # selective verification of high-fanout completions
        for nid in g.node_ids():
            node = g.nodes[nid]
            if (
                node.status is NodeStatus.DONE
                and node.verification_of is None
                and verification_id(nid) not in g
                and len(g.dependents(nid)) >= self.risk_fanout
            ):
                actions.append(OpAction(MutationOp(KIND_VERIFY, nid, self.agent)))

        # assign when the frontier outpaced self-claims last round
        if ctx.prev_frontier > ctx.prev_claims and ctx.idle_workers:
            pending = [nid for nid in ctx.frontier if g.nodes[nid].status is NodeStatus.PENDING]
            for nid, worker in zip(pending, ctx.idle_workers):
                actions.append(
                    OpAction(
                        MutationOp(KIND_ASSIGN, nid, self.agent, assignee=worker)
                    )
                )
        return actions


# ---------------------------------------------------------------------------
# Policies: static-graph ablation


class StaticLeadPolicy:
    """Seeds every known root up front, assigns everything round-robin in the
    first execution round, then goes quiet.  No recovery operators."""

    def __init__(self, agent: AgentId, runtime: TaskRuntime, spec: ScenarioSpec,
                 workers: tuple):
        self.agent = agent
        self.runtime = runtime
        self.workers = tuple(sorted(workers))

    def plan_turn(self, ctx: PlanContext) -> list:
        if ctx.turn > 1:
            return []
        return [
            OpAction(_discover_op(self.agent, self.runtime.tree.tasks[rid], ()))
            for rid in self.runtime.tree.roots
        ]

    def step(self, ctx: LeadContext) -> list:
        g = ctx.graph
        pending = [
            nid for nid in g.node_ids() if g.nodes[nid].status is NodeStatus.PENDING
        ]
        return [
            OpAction(
                MutationOp(
                    KIND_ASSIGN,
                    nid,
                    self.agent,
                    assignee=self.workers[i % len(self.workers)],
                )
            )
            for i, nid in enumerate(pending)
        ]


class StaticWorkerPolicy(GraphWorkerBase):
    """Works its assigned queue in order; cannot self-claim or discover."""

    def step(self, ctx: WorkerContext) -> list:
        if self._forced_silent(ctx.round):
            return []
        in_progress = sorted(
            (n for n in ctx.held if n.status is NodeStatus.IN_PROGRESS),
            key=lambda n: n.id,
        )
        if in_progress:
            actions = self._work_held(in_progress[0], ctx)
            # discovery is frozen in this mode; drop surfaced subtasks
            return [
                a
                for a in actions
                if not (isinstance(a, OpAction) and a.op.kind == KIND_DISCOVER)
            ]
        assigned = sorted(
            (n for n in ctx.held if n.status is NodeStatus.ASSIGNED),
            key=lambda n: n.id,
        )
        if assigned:
            return [StartAction(assigned[0].id)]
        return []


# ---------------------------------------------------------------------------
# Policies: graph-free baselines


class PoolWorkerBase:
    """Shared execution behavior for graph-free modes: per-agent progress on
    a chosen task, with the same stall faults as the graph modes."""

    def __init__(self, agent: AgentId, runtime: TaskRuntime, spec: ScenarioSpec,
                 speed: float):
        self.agent = agent
        self.runtime = runtime
        self.spec = spec
        self.speed = speed
        self.rng = random.Random(f"{spec.seed}/{agent.name}")

    def _work_task(self, task_id: str, t: int) -> list:
        att = self.runtime.pool_attempt(task_id, self.agent.name)
        task = self.runtime.tree.tasks[task_id]
        if not att.planned:
            att.planned = True
            total = work_rounds_needed(task.duration, self.speed)
            if self.rng.random() < self.spec.stall_prob:
                att.stall_point = self.rng.randint(0, total)
                att.stall_len = self.rng.randint(*self.spec.stall_rounds)
        if att.stalled_until >= t:
            return []
        if (
            att.stall_point == att.work_rounds
            and not att.stall_taken
            and att.stall_point >= 0
        ):
            att.stall_taken = True
            att.stalled_until = t + att.stall_len - 1
            return []
        result = self.runtime.pool_work(task_id, self.agent.name, self.speed)
        if result.length > 0:
            return [WriteAction(task.artifact, result.start, result.length)]
        return []


class HintedWorkerPolicy(PoolWorkerBase):
    """Leader-worker mode: follows the lead's latest hint, falling back to
    the lowest-id incomplete task it can see."""

    def __init__(self, agent, runtime, spec, speed):
        super().__init__(agent, runtime, spec, speed)
        self._hint: str | None = None

    def step(self, ctx: PoolContext) -> list:
        for msg in ctx.mailbox:
            if msg.startswith("hint:"):
                self._hint = msg.split(":", 1)[1]
        complete = {v.id: v.complete for v in ctx.tasks}
        target = self._hint
        if target is None or complete.get(target, True):
            incomplete = [v.id for v in ctx.tasks if not v.complete]
            target = incomplete[0] if incomplete else None
        if target is None:
            return []
        return self._work_task(target, ctx.round)


class BroadcastLeadPolicy:
    """Leader-worker mode lead: no task-graph, just per-round target hints
    broadcast over the mailbox, cycling through incomplete tasks."""

    def __init__(self, agent: AgentId, runtime: TaskRuntime, spec: ScenarioSpec,
                 workers: tuple):
        self.agent = agent
        self.workers = tuple(sorted(workers))

    def step(self, ctx: PoolContext) -> list:
        incomplete = [v.id for v in ctx.tasks if not v.complete]
        if not incomplete:
            return []
        return [
            MessageAction(worker, f"hint:{incomplete[i % len(incomplete)]}")
            for i, worker in enumerate(self.workers)
        ]


class PeerPolicy(PoolWorkerBase):
    """Decentralized mode: symmetric peer that picks incomplete work by its
    own seeded preference order and broadcasts a status line every round."""

    def __init__(self, agent, runtime, spec, speed):
        super().__init__(agent, runtime, spec, speed)
        self._pref: list = []

    def step(self, ctx: PoolContext) -> list:
        known = [v.id for v in ctx.tasks]
        new = [tid for tid in known if tid not in self._pref]
        if new:
            self.rng.shuffle(new)
            self._pref.extend(new)
        complete = {v.id: v.complete for v in ctx.tasks}
        target = next((tid for tid in self._pref if not complete.get(tid, True)), None)
        if target is None:
            return []
        actions = self._work_task(target, ctx.round)
        actions.append(MessageAction("*", f"status:{self.agent.name}:{target}"))
        return actions
