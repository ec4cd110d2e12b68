import random

import pytest

from coordsim.graph import CoordinationGraph, NodeStatus, TaskNode

_CRITERION_LINES = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    """Collect one pass/fail line per acceptance criterion; printed in the
    terminal summary so the verdicts survive output capture."""
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] {name}" + (f" :: {detail}" if detail else "")
    _CRITERION_LINES.append(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)


def random_graph(rng: random.Random, max_nodes: int = 12) -> CoordinationGraph:
    """Random labelled DAG: node i may only depend on nodes j < i, so the
    result is acyclic by construction."""
    n = rng.randint(0, max_nodes)
    statuses = list(NodeStatus)
    nodes = {}
    for i in range(n):
        nid = f"n{i:02d}"
        pool = [f"n{j:02d}" for j in range(i)]
        deps = frozenset(rng.sample(pool, rng.randint(0, len(pool))))
        status = rng.choice(statuses)
        agent = None
        if status in (NodeStatus.ASSIGNED, NodeStatus.IN_PROGRESS):
            agent = rng.choice(["w01", "w02", "w03"])
        elif status in (NodeStatus.DONE, NodeStatus.VERIFIED) and rng.random() < 0.8:
            agent = rng.choice(["w01", "w02", "w03"])
        nodes[nid] = TaskNode(id=nid, deps=deps, agent=agent, status=status)
    return CoordinationGraph(nodes)


@pytest.fixture
def rng():
    return random.Random(1234)
