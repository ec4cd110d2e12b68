"""Acceptance gate: one test per acceptance criterion, each emitting a single
pass/fail line in the terminal summary.

The statistical criteria run paired seed batches shared through module-scoped
fixtures so the whole gate stays well inside its time budget.
"""

import random
import statistics
import time

import pytest

from conftest import record_criterion
from coordsim.baselines import get_mode
from coordsim.graph import (
    CoordinationGraph,
    NodeStatus,
    frontier,
    is_acyclic,
    structural_hash,
)
from coordsim.metrics import aggregate, percentile_nearest_rank
from coordsim.mutation import (
    ALL_KINDS,
    KIND_CLAIM,
    ROLE_LEAD,
    ROLE_WORKER,
    AgentId,
    MutationOp,
    apply,
)
from coordsim.protocol import Engine, ProtocolConfig, replay, run
from coordsim.scenario import OpAction, ScenarioSpec
from test_metrics import make_report
from conftest import random_graph

CONFIG = ProtocolConfig()
N_PAIRED = 100


@pytest.fixture(scope="module")
def default_batch():
    """100 paired seeds, default fault rates, all four modes."""
    runs = {m: [] for m in ("dynamic", "static", "leader_worker", "decentralized")}
    for seed in range(N_PAIRED):
        spec = ScenarioSpec(seed=seed)
        for mode_name in runs:
            runs[mode_name].append(run(CONFIG, spec, get_mode(mode_name)))
    return runs


def test_c01_dag_invariance_fuzz():
    """Criterion 1: 100k random operator applications never break acyclicity
    or label invariants, in under 60 seconds."""
    rng = random.Random(20260824)
    lead = AgentId("lead", ROLE_LEAD)
    workers = [AgentId(f"w{i:02d}", ROLE_WORKER) for i in range(1, 5)]
    roster = frozenset(w.name for w in workers)
    ids = [f"n{i:02d}" for i in range(50)]
    g = CoordinationGraph()
    version = 0
    t0 = time.perf_counter()
    violations = []
    for step in range(100_000):
        kind = rng.choice(ALL_KINDS)
        caller = rng.choice([lead] + workers)
        target = rng.choice(ids)
        deps = tuple(rng.sample(ids, rng.randint(0, 3)))
        assignee = rng.choice([None, "lead", "ghost"] + sorted(roster))
        op = MutationOp(kind, target, caller, deps=deps, assignee=assignee)
        round_index = step // 1000 + 1
        g2, outcome = apply(g, op, round_index, version, workers=roster)
        if outcome.accepted:
            if outcome.graph_version != version + 1:
                violations.append(f"version skew at step {step}")
                break
        else:
            if g2 is not g:
                violations.append(f"rejected op mutated graph at step {step}")
                break
        g, version = g2, outcome.graph_version
        if step % 1000 == 0 or step == 99_999:
            if not is_acyclic(g):
                violations.append(f"cycle at step {step}")
                break
            for node in g.nodes.values():
                if node.status is NodeStatus.PENDING and node.agent is not None:
                    violations.append(f"pending node {node.id} has an agent")
                if node.status in (NodeStatus.ASSIGNED, NodeStatus.IN_PROGRESS) \
                        and node.agent is None:
                    violations.append(f"held node {node.id} has no agent")
            if violations:
                break
    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed < 60.0
    detail = violations[0] if violations else f"100k ops in {elapsed:.1f}s"
    record_criterion("C1 graph stays a labelled DAG under operator fuzzing", ok, detail)


def test_c02_frontier_matches_brute_force_oracle():
    """Criterion 2: frontier equals the brute-force definition on 10k random
    graphs of up to 12 nodes."""
    rng = random.Random(99)
    mismatches = 0
    for _ in range(10_000):
        g = random_graph(rng, max_nodes=12)
        oracle = sorted(
            nid
            for nid, node in g.nodes.items()
            if node.status is NodeStatus.PENDING
            and all(
                g.nodes[d].status in (NodeStatus.DONE, NodeStatus.VERIFIED)
                for d in node.deps
            )
        )
        if frontier(g) != oracle:
            mismatches += 1
    record_criterion(
        "C2 frontier matches the brute-force oracle on 10k random graphs",
        mismatches == 0,
        f"{mismatches} mismatches",
    )


def test_c03_dispatch_offers_scale_with_frontier(default_batch):
    """Criterion 3: every round offers exactly min(frontier, idle workers)
    fresh nodes to idle workers, zero violations over 100 runs."""
    violations = 0
    rounds_checked = 0
    for result in default_batch["dynamic"]:
        offers = {}
        for e in result.trace.of_type("dispatch"):
            if e["reason"] == "offer":
                offers.setdefault(e["round"], []).append(e["offer"])
        for e in result.trace.of_type("round_end"):
            rounds_checked += 1
            expected = min(e["frontier_size"], e["idle_workers"])
            got = offers.get(e["round"], [])
            if len(got) != expected or len(set(got)) != len(got):
                violations += 1
    record_criterion(
        "C3 idle workers receive min(|frontier|, idle) distinct offers",
        violations == 0,
        f"{rounds_checked} rounds, {violations} violations",
    )


def test_c04_heartbeat_flags_after_exact_threshold():
    """Criterion 4: a worker silent from round r while holding a node is first
    flagged at exactly r + H, across 50 seeds."""
    h = CONFIG.heartbeat_threshold
    failures = []
    for seed in range(50):
        r = 2 + seed % 9
        spec = ScenarioSpec(
            seed=seed,
            roots=4,
            depth=1,
            duration_choices=(30,),
            stall_prob=0.0,
            false_complete_prob=0.0,
            decline_prob=0.0,
            forced_silence=("w01", r),
        )
        result = run(CONFIG, spec, get_mode("dynamic"))
        flagged = [
            e["round"]
            for e in result.trace.of_type("heartbeat")
            if e["agent"] == "w01"
        ]
        first = min(flagged, default=None)
        if first != r + h:
            failures.append(f"seed {seed}: first flag {first}, expected {r + h}")
    record_criterion(
        "C4 heartbeat flags a silent holder at exactly r+H",
        not failures,
        failures[0] if failures else "50/50 exact",
    )


def test_c05_simultaneous_claims_resolve_first_come_first_served():
    """Criterion 5: k simultaneous claims on one node accept exactly the first
    in canonical order and reject the rest, for k = 2..5."""
    failures = []
    for k in range(2, 6):
        engine = Engine(
            ProtocolConfig(workers=5), ScenarioSpec(seed=0), get_mode("dynamic")
        )
        engine.plan()
        target = sorted(engine.graph.nodes)[0]
        claimants = [AgentId(f"w{i:02d}", ROLE_WORKER) for i in range(1, k + 1)]
        order = list(claimants)
        random.Random(k).shuffle(order)  # arrival order must not matter
        batches = [
            (w, [OpAction(MutationOp(KIND_CLAIM, target, w))]) for w in order
        ]
        engine.apply_phase(1, batches)
        ops = [e for e in engine.trace.of_type("op") if e["kind"] == KIND_CLAIM]
        accepted = [e["caller"] for e in ops if e["accepted"]]
        rejected = [e for e in ops if not e["accepted"]]
        winner = min(w.name for w in claimants)
        if accepted != [winner]:
            failures.append(f"k={k}: accepted {accepted}, expected [{winner}]")
        elif len(rejected) != k - 1 or any(
            e["reason"] != "not-claimable" for e in rejected
        ):
            failures.append(f"k={k}: bad rejections {rejected}")
        elif engine.graph.node(target).agent != winner:
            failures.append(f"k={k}: node owned by {engine.graph.node(target).agent}")
    record_criterion(
        "C5 simultaneous claims: exactly one winner, deterministic order",
        not failures,
        failures[0] if failures else "k=2..5 exact",
    )


def test_c06_dynamic_recovers_from_stragglers():
    """Criterion 6: with stall injection, the static baseline's pooled p95
    node latency is at least 1.5x the dynamic mode's, and the dynamic median
    is strictly lower, over 100 paired seeds, in under 5 minutes."""
    t0 = time.perf_counter()
    dyn, sta = [], []
    for seed in range(N_PAIRED):
        spec = ScenarioSpec(seed=seed, stall_prob=0.15)
        dyn += run(CONFIG, spec, get_mode("dynamic")).report.node_latencies
        sta += run(CONFIG, spec, get_mode("static")).report.node_latencies
    elapsed = time.perf_counter() - t0
    p95_ratio = percentile_nearest_rank(sta, 0.95) / percentile_nearest_rank(dyn, 0.95)
    med_dyn, med_sta = statistics.median(dyn), statistics.median(sta)
    ok = p95_ratio >= 1.5 and med_dyn < med_sta and elapsed < 300.0
    record_criterion(
        "C6 straggler recovery: static p95 >= 1.5x dynamic, median strictly lower",
        ok,
        f"p95 ratio {p95_ratio:.2f}, median {med_dyn} vs {med_sta}, {elapsed:.0f}s",
    )


def test_c07_dynamic_limits_write_conflicts(default_batch):
    """Criterion 7: over 100 paired seeds the dynamic mode's median overwrite
    and concurrent-write counts are at most half the decentralized baseline's,
    and its wasted characters are strictly lower."""
    def medians(mode):
        reports = [r.report for r in default_batch[mode]]
        return (
            statistics.median(r.overwrites for r in reports),
            statistics.median(r.concurrent_writes for r in reports),
            statistics.median(r.wasted_chars for r in reports),
        )

    ow_d, cw_d, wa_d = medians("dynamic")
    ow_c, cw_c, wa_c = medians("decentralized")
    ok = ow_d <= ow_c / 2 and cw_d <= cw_c / 2 and wa_d < wa_c
    record_criterion(
        "C7 conflict containment vs decentralized baseline",
        ok,
        f"overwrites {ow_d} vs {ow_c}, concurrent {cw_d} vs {cw_c}, "
        f"wasted {wa_d} vs {wa_c}",
    )


def test_c08_activation_fractions(default_batch):
    """Criterion 8: decentralized peers are active every round (exactly 1.0);
    the dynamic mode stays under 0.9 and strictly below every baseline."""
    means = {
        m: statistics.fmean(r.report.team_active_fraction for r in default_batch[m])
        for m in default_batch
    }
    dec_exact = all(
        r.report.team_active_fraction == 1.0 for r in default_batch["decentralized"]
    )
    d = means["dynamic"]
    ok = (
        dec_exact
        and d < 0.9
        and all(d < means[m] for m in means if m != "dynamic")
    )
    record_criterion(
        "C8 team activation: dynamic < 0.9 and below all baselines, peers at 1.0",
        ok,
        ", ".join(f"{m} {v:.3f}" for m, v in sorted(means.items())),
    )


def test_c09_graph_growth(default_batch):
    """Criterion 9: the dynamic graph ends strictly larger than the static one
    in at least 95 of 100 paired runs, and the static graph never grows."""
    grew = 0
    static_exact = True
    for rd, rs in zip(default_batch["dynamic"], default_batch["static"]):
        if rd.report.final_node_count > rs.report.final_node_count:
            grew += 1
        seeded = rs.trace.of_type("planning")[0]["seeded_nodes"]
        if rs.report.final_node_count != seeded:
            static_exact = False
    ok = grew >= 95 and static_exact
    record_criterion(
        "C9 graph growth: dynamic exceeds static >=95/100, static frozen at |V0|",
        ok,
        f"grew {grew}/100, static exact: {static_exact}",
    )


def test_c10_expected_cost_doubles_at_half_completion():
    """Criterion 10: completion-adjusted cost equals mean cost divided by the
    completion rate, so at rate 0.5 it is exactly 2c."""
    reports = [
        make_report(completed=True, total_cost_chars=120),
        make_report(completed=False, total_cost_chars=80),
        make_report(completed=True, total_cost_chars=100),
        make_report(completed=False, total_cost_chars=100),
    ]
    summary = aggregate(reports)
    c = statistics.fmean(r.total_cost_chars for r in reports)
    ok = summary["completion_rate"] == 0.5 and summary["expected_cost_chars"] == 2 * c
    record_criterion(
        "C10 expected cost is exactly 2c at completion rate 0.5",
        ok,
        f"rate {summary['completion_rate']}, cost {summary['expected_cost_chars']}",
    )


def test_c11_workspace_conservation(default_batch):
    """Criterion 11: characters written equal surviving plus wasted, exactly,
    on every run of every mode."""
    failures = 0
    checked = 0
    for results in default_batch.values():
        for result in results:
            rep = result.report
            checked += 1
            if rep.chars_written != rep.chars_surviving + rep.wasted_chars:
                failures += 1
    record_criterion(
        "C11 workspace conservation: written = surviving + wasted, exactly",
        failures == 0,
        f"{checked} runs checked",
    )


def test_c12_determinism_and_replay():
    """Criterion 12: same seed gives byte-identical traces, and replaying a
    trace reproduces the final graph hash, for every mode."""
    failures = []
    for mode_name in ("dynamic", "static", "leader_worker", "decentralized"):
        for seed in (0, 17):
            spec = ScenarioSpec(seed=seed)
            a = run(CONFIG, spec, get_mode(mode_name))
            b = run(CONFIG, spec, get_mode(mode_name))
            if a.trace.to_jsonl() != b.trace.to_jsonl():
                failures.append(f"{mode_name}/{seed}: traces differ")
                continue
            if structural_hash(replay(a.trace)) != structural_hash(a.graph):
                failures.append(f"{mode_name}/{seed}: replay hash mismatch")
    record_criterion(
        "C12 byte-identical traces per seed, replay reproduces the graph",
        not failures,
        failures[0] if failures else "4 modes x 2 seeds exact",
    )
