"""Coordination metrics computed from the event trace plus final state.

Everything here is derived from the run trace, the final graph, and the
workspace write log; nothing peeks at engine internals, so metrics can be
recomputed offline from a saved trace file.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

from .workspace import (
    Workspace,
    concurrent_write_events,
    overwrite_events,
    wasted_characters,
)


def percentile_nearest_rank(values: list, q: float) -> float:
    """Nearest-rank percentile: the smallest value with at least q of the
    sample at or below it.  Returns nan on empty input."""
    if not values:
        return float("nan")
    ordered = sorted(values)
    rank = max(1, math.ceil(q * len(ordered)))
    return float(ordered[rank - 1])


@dataclass
class MetricsReport:
    mode: str
    completed: bool
    rounds_used: int
    team_size: int
    total_cost_chars: int
    messages_count: int
    messages_chars: int
    chars_written: int
    chars_surviving: int
    wasted_chars: int
    overwrites: int
    concurrent_writes: int
    team_active_fraction: float
    worker_active_fraction: float
    lead_active_fraction: float
    per_agent_active: dict
    seeded_nodes: int
    planning_turns_used: int
    final_node_count: int
    node_latencies: list
    latency_mean: float
    latency_p95: float
    operator_usage: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compute(trace, final_graph, workspace: Workspace) -> MetricsReport:
    """Single-run metrics from the trace and final state."""
    run_end = trace.of_type("run_end")[-1]
    rounds_used = run_end["rounds_used"]
    team_size = run_end["team_size"]

    writes = trace.of_type("write")
    messages = trace.of_type("message")
    chars_written = sum(w["length"] for w in writes)
    messages_chars = sum(m["chars"] for m in messages)
    final_lengths = workspace.final_lengths()
    chars_surviving = sum(final_lengths.values())
    wasted = wasted_characters(workspace.log, final_lengths)

    # activity: fraction of (agent, round) slots in which the agent was
    # dispatched at all, per agent and pooled
    dispatched: dict = {}
    for e in trace.of_type("dispatch"):
        dispatched.setdefault(e["agent"], set()).add(e["round"])
    per_agent = {
        a: len(rounds) / rounds_used if rounds_used else 0.0
        for a, rounds in sorted(dispatched.items())
    }
    total_slots = team_size * rounds_used
    active_slots = sum(len(r) for r in dispatched.values())
    team_active = active_slots / total_slots if total_slots else 0.0
    has_lead = run_end.get("has_lead", "lead" in dispatched)
    lead_active = len(dispatched.get("lead", ())) / rounds_used if rounds_used else 0.0
    worker_count = team_size - 1 if has_lead else team_size
    worker_slots = worker_count * rounds_used
    worker_active = (
        sum(len(r) for a, r in dispatched.items() if a != "lead") / worker_slots
        if worker_slots
        else 0.0
    )

    # node latency: completion round minus acquisition round of the final
    # execution stretch (a release resets the clock)
    acquired: dict = {}
    latencies: list = []
    usage: dict = {}
    seeded_nodes = 0
    planning_turns = 0
    for e in trace.events:
        kind = e["type"]
        if kind == "planning":
            seeded_nodes = e["seeded_nodes"]
            planning_turns = e["turns_used"]
        elif kind == "op":
            stats = usage.setdefault(
                e["kind"], {"accepted": 0, "rejected": 0, "by_role": {}}
            )
            bucket = "accepted" if e["accepted"] else "rejected"
            stats[bucket] += 1
            stats["by_role"][e["role"]] = stats["by_role"].get(e["role"], 0) + 1
            if not e["accepted"]:
                continue
            if e["kind"] in ("Assign", "Claim"):
                acquired[e["target"]] = e["round"]
            elif e["kind"] == "Release":
                acquired.pop(e["target"], None)
            elif e["kind"] in ("Complete", "Close"):
                start = acquired.pop(e["target"], e["round"])
                latencies.append(e["round"] - start)
        elif kind == "start" and e.get("accepted"):
            acquired[e["target"]] = e["round"]

    latency_mean = statistics.fmean(latencies) if latencies else float("nan")
    latency_p95 = percentile_nearest_rank(latencies, 0.95)

    return MetricsReport(
        mode=run_end["mode"],
        completed=run_end["completed"],
        rounds_used=rounds_used,
        team_size=team_size,
        total_cost_chars=chars_written + messages_chars,
        messages_count=len(messages),
        messages_chars=messages_chars,
        chars_written=chars_written,
        chars_surviving=chars_surviving,
        wasted_chars=wasted,
        overwrites=overwrite_events(workspace.log),
        concurrent_writes=concurrent_write_events(workspace.log),
        team_active_fraction=team_active,
        worker_active_fraction=worker_active,
        lead_active_fraction=lead_active,
        per_agent_active=per_agent,
        seeded_nodes=seeded_nodes,
        planning_turns_used=planning_turns,
        final_node_count=len(final_graph),
        node_latencies=sorted(latencies),
        latency_mean=latency_mean,
        latency_p95=latency_p95,
        operator_usage=usage,
    )


def _mean_sem(values: list) -> dict:
    n = len(values)
    mean = statistics.fmean(values) if values else float("nan")
    if n > 1:
        sem = statistics.stdev(values) / math.sqrt(n)
        degenerate = False
    else:
        sem = 0.0
        degenerate = True
    return {"mean": mean, "sem": sem, "n": n, "sem_degenerate": degenerate}


def aggregate(reports: list) -> dict:
    """Cross-repetition summary: means with standard errors, completion rate,
    cost per completed run, and the pooled latency tail."""
    if not reports:
        raise ValueError("aggregate needs at least one report")
    n = len(reports)
    completion_rate = sum(1 for r in reports if r.completed) / n
    cost = _mean_sem([r.total_cost_chars for r in reports])
    if completion_rate > 0:
        expected_cost = cost["mean"] / completion_rate
    else:
        expected_cost = float("inf")
    pooled = sorted(x for r in reports for x in r.node_latencies)
    summary = {
        "mode": reports[0].mode,
        "n": n,
        "completion_rate": completion_rate,
        "expected_cost_chars": expected_cost,
        "pooled_latency_p95": percentile_nearest_rank(pooled, 0.95),
        "pooled_latency_median": (
            float(statistics.median(pooled)) if pooled else float("nan")
        ),
    }
    for name in (
        "total_cost_chars",
        "rounds_used",
        "messages_count",
        "messages_chars",
        "wasted_chars",
        "overwrites",
        "concurrent_writes",
        "team_active_fraction",
        "lead_active_fraction",
        "seeded_nodes",
        "final_node_count",
    ):
        summary[name] = _mean_sem([getattr(r, name) for r in reports])
    return summary
