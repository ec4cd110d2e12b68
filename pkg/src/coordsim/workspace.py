"""Simulated shared artifact store.

Content is character-denominated; each artifact keeps per-character
last-writer attribution so conflict and waste metrics can be computed
either online or by replaying the append-only write log.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class WriteRecord:
    round: int
    agent: str
    artifact: str
    start: int
    length: int
    replaced: int

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "agent": self.agent,
            "artifact": self.artifact,
            "start": self.start,
            "length": self.length,
            "replaced": self.replaced,
        }


class Workspace:
    """Shared store written only by the orchestrator's serializer."""

    def __init__(self):
        # artifact -> list of (agent, round) per character position
        self._attribution: dict = {}
        self.log: list = []

    def write(self, artifact: str, agent: str, round_index: int, start: int, length: int) -> WriteRecord:
        if length < 0 or start < 0:
            raise ValueError("write span must be non-negative")
        chars = self._attribution.setdefault(artifact, [])
        end = start + length
        if end > len(chars):
            chars.extend([None] * (end - len(chars)))
        replaced = sum(1 for i in range(start, end) if chars[i] is not None)
        for i in range(start, end):
            chars[i] = (agent, round_index)
        record = WriteRecord(round_index, agent, artifact, start, length, replaced)
        self.log.append(record)
        return record

    def content_length(self, artifact: str) -> int:
        """Characters actually written so far (unwritten gaps excluded)."""
        chars = self._attribution.get(artifact, [])
        return sum(1 for c in chars if c is not None)

    def final_lengths(self) -> dict:
        return {name: self.content_length(name) for name in sorted(self._attribution)}

    def artifacts(self) -> list:
        return sorted(self._attribution)


def _replay_attribution(log: list):
    """Yield (record, prior-attribution-per-position) by replaying the log."""
    state: dict = {}
    for rec in log:
        chars = state.setdefault(rec.artifact, [])
        end = rec.start + rec.length
        if end > len(chars):
            chars.extend([None] * (end - len(chars)))
        prior = [chars[i] for i in range(rec.start, end)]
        for i in range(rec.start, end):
            chars[i] = (rec.agent, rec.round)
        yield rec, prior


def overwrite_events(log: list) -> int:
    """Writes that replace another agent's characters from a strictly earlier
    round.  Same-agent rewrites and same-round collisions do not count."""
    count = 0
    for rec, prior in _replay_attribution(log):
        hit = any(
            p is not None and p[0] != rec.agent and p[1] < rec.round for p in prior
        )
        if rec.replaced > 0 and hit:
            count += 1
    return count


def concurrent_write_events(log: list) -> int:
    """Distinct (round, artifact) pairs written by two or more agents."""
    writers: dict = {}
    for rec in log:
        if rec.length > 0:
            writers.setdefault((rec.round, rec.artifact), set()).add(rec.agent)
    return sum(1 for agents in writers.values() if len(agents) >= 2)


def wasted_characters(log: list, final_lengths: dict) -> int:
    """Characters written during the run that do not survive into the final
    artifact state.  Conservation holds exactly: written = surviving + wasted."""
    written = sum(rec.length for rec in log)
    surviving = sum(final_lengths.values())
    return written - surviving
