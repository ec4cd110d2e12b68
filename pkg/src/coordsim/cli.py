"""Command line front end.

Subcommands:

* ``run``          execute one mode for N seeded repetitions, write per-run
                   traces/reports plus an aggregate summary
* ``compare``      run several modes over the same seeds and print a
                   side-by-side table
* ``export-graph`` rebuild the final graph from a saved trace and emit DOT

Configuration is a JSON file.  Validation is strict: an unknown or
ill-typed field fails fast with the offending field named, and nothing is
written to the output directory in that case.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .baselines import MODES, get_mode
from .graph import to_dot, to_records
from .metrics import aggregate
from .protocol import ProtocolConfig, RoundTrace, replay, run
from .scenario import InvalidParameterError, ScenarioSpec

EXIT_BAD_CONFIG = 1
EXIT_BAD_PATH = 2


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


_SCENARIO_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioSpec)}
_PROTOCOL_FIELDS = {f.name: f for f in dataclasses.fields(ProtocolConfig)}
_TOP_FIELDS = {"mode", "modes", "seed", "repetitions", "scenario", "protocol"}


def _build_section(raw: dict, fields: dict, cls, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"field '{section}' must be an object")
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"unknown field '{section}.{key}'")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        obj = cls(**kwargs)
        obj.validate()
    except (TypeError, InvalidParameterError, ValueError) as exc:
        raise ConfigError(f"invalid field in '{section}': {exc}") from exc
    return obj


def load_config(raw: dict) -> dict:
    """Validate the raw JSON document into a normalized config dict."""
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be an object")
    for key in raw:
        if key not in _TOP_FIELDS:
            raise ConfigError(f"unknown field '{key}'")

    modes = raw.get("modes")
    if modes is None:
        modes = [raw.get("mode", "dynamic")]
    if not isinstance(modes, list) or not all(isinstance(m, str) for m in modes):
        raise ConfigError("field 'modes' must be a list of strings")
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"field 'mode': unknown mode '{m}'")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("field 'seed' must be an integer")
    repetitions = raw.get("repetitions", 10)
    if not isinstance(repetitions, int) or isinstance(repetitions, bool) or repetitions < 1:
        raise ConfigError("field 'repetitions' must be a positive integer")

    scenario_raw = dict(raw.get("scenario", {}))
    scenario_raw.pop("seed", None)  # per-repetition seeds come from 'seed'
    scenario = _build_section(scenario_raw, _SCENARIO_FIELDS, ScenarioSpec, "scenario")
    protocol = _build_section(
        raw.get("protocol", {}), _PROTOCOL_FIELDS, ProtocolConfig, "protocol"
    )
    return {
        "modes": modes,
        "seed": seed,
        "repetitions": repetitions,
        "scenario": scenario,
        "protocol": protocol,
    }


def _read_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        print(f"error: config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_PATH)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)
    try:
        return load_config(raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)


def run_batch(config: dict, mode_name: str, out_dir: Path | None):
    """Execute one mode over all repetitions; returns (reports, summary)."""
    reports = []
    for i in range(config["repetitions"]):
        seed = config["seed"] + i
        spec = dataclasses.replace(config["scenario"], seed=seed)
        result = run(config["protocol"], spec, get_mode(mode_name))
        reports.append(result.report)
        if out_dir is not None:
            run_dir = out_dir / f"{mode_name}-seed{seed:04d}"
            run_dir.mkdir(parents=True, exist_ok=True)
            (run_dir / "trace.jsonl").write_text(result.trace.to_jsonl())
            (run_dir / "report.json").write_text(
                json.dumps(result.report.to_dict(), indent=2, sort_keys=True) + "\n"
            )
            (run_dir / "graph.json").write_text(
                json.dumps(to_records(result.graph), indent=2, sort_keys=True) + "\n"
            )
    return reports, aggregate(reports)


_TABLE_COLUMNS = (
    ("completion_rate", "complete"),
    ("expected_cost_chars", "exp_cost"),
    ("overwrites", "overwrite"),
    ("concurrent_writes", "concur"),
    ("wasted_chars", "wasted"),
    ("team_active_fraction", "active"),
    ("pooled_latency_p95", "lat_p95"),
    ("final_node_count", "nodes"),
)


def _cell(summary: dict, key: str) -> str:
    value = summary[key]
    if isinstance(value, dict):
        return f"{value['mean']:.1f}±{value['sem']:.1f}"
    if isinstance(value, float):
        return f"{value:.3g}"
    return str(value)


def format_table(summaries: list) -> str:
    header = ["mode"] + [label for _, label in _TABLE_COLUMNS]
    rows = [header]
    for s in summaries:
        rows.append([s["mode"]] + [_cell(s, key) for key, _ in _TABLE_COLUMNS])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _write_summary_csv(path: Path, summaries: list) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode"] + [key for key, _ in _TABLE_COLUMNS])
        for s in summaries:
            row = [s["mode"]]
            for key, _ in _TABLE_COLUMNS:
                value = s[key]
                row.append(value["mean"] if isinstance(value, dict) else value)
            writer.writerow(row)


def cmd_run(args) -> int:
    config = _read_config(args.config)
    out_dir = Path(args.out)
    mode_name = config["modes"][0]
    out_dir.mkdir(parents=True, exist_ok=True)
    _, summary = run_batch(config, mode_name, out_dir)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    _write_summary_csv(out_dir / "summary.csv", [summary])
    print(format_table([summary]))
    return 0


def cmd_compare(args) -> int:
    config = _read_config(args.config)
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    for mode_name in config["modes"]:
        _, summary = run_batch(config, mode_name, out_dir)
        summaries.append(summary)
    if out_dir is not None:
        (out_dir / "summary.json").write_text(
            json.dumps(summaries, indent=2, sort_keys=True) + "\n"
        )
        _write_summary_csv(out_dir / "summary.csv", summaries)
    print(format_table(summaries))
    return 0


def cmd_export_graph(args) -> int:
    trace_path = Path(args.trace)
    if not trace_path.is_file():
        print(f"error: trace file not found: {args.trace}", file=sys.stderr)
        return EXIT_BAD_PATH
    trace = RoundTrace.from_jsonl(trace_path.read_text())
    graph = replay(trace)
    dot = to_dot(graph)
    if args.out:
        Path(args.out).write_text(dot)
    else:
        print(dot, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordsim",
        description="Deterministic simulator for coordinated multi-agent task execution.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one mode over seeded repetitions")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several modes on the same seeds")
    p_cmp.add_argument("--config", required=True, help="JSON config file")
    p_cmp.add_argument("--out", help="optional output directory")
    p_cmp.set_defaults(func=cmd_compare)

    p_exp = sub.add_parser("export-graph", help="final graph from a trace, as DOT")
    p_exp.add_argument("--trace", required=True, help="trace.jsonl from a prior run")
    p_exp.add_argument("--out", help="DOT output file (default: stdout)")
    p_exp.set_defaults(func=cmd_export_graph)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
