"""Ordered message log between the two parties and the modeled latency.

Every message carries a pipeline step, a phase tag, and a byte count; an
interaction is one client/server exchange at a module boundary (the unit
the protocol optimizations try to reduce). Wall-clock cost is never
injected into runs; estimate_latency turns a finished transcript into
modeled seconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .costs import PHASES, STEPS, CostReport

KINDS = ("ciphertext", "share", "gc_material", "ot")

PARTIES = ("client", "server")


@dataclass(frozen=True)
class Message:
    sender: str
    step: str
    phase: str
    kind: str
    nbytes: int


@dataclass(frozen=True)
class ChannelModel:
    """Network model: per-interaction delay plus byte-proportional transfer."""

    delay_s: float = 0.0023
    bandwidth_bps: float = 1e8  # bytes per second

    def __post_init__(self):
        if self.delay_s < 0 or self.bandwidth_bps <= 0:
            raise ValueError("channel parameters must be nonnegative")


class Transcript:
    def __init__(self):
        self.messages: list[Message] = []
        self._interactions: dict[tuple[str, str], int] = {}

    def send(self, sender: str, step: str, kind: str, nbytes: int, phase: str = "online"):
        if sender not in PARTIES:
            raise ValueError(f"unknown sender {sender!r}")
        if step not in STEPS:
            raise ValueError(f"unknown step {step!r}")
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        if kind not in KINDS:
            raise ValueError(f"unknown kind {kind!r}")
        if nbytes <= 0:
            raise ValueError("messages must carry bytes")
        self.messages.append(Message(sender, step, phase, kind, int(nbytes)))

    def interaction(self, step: str, phase: str = "online", count: int = 1):
        if step not in STEPS or phase not in PHASES:
            raise ValueError(f"unknown step/phase {step!r}/{phase!r}")
        key = (step, phase)
        self._interactions[key] = self._interactions.get(key, 0) + count

    # -- queries ------------------------------------------------------------

    def interactions(self, step: str | None = None, phase: str = "online") -> int:
        return sum(
            v
            for (s, p), v in self._interactions.items()
            if p == phase and (step is None or s == step)
        )

    def bytes_sent(self, step: str | None = None, phase: str | None = None) -> int:
        return sum(
            m.nbytes
            for m in self.messages
            if (step is None or m.step == step) and (phase is None or m.phase == phase)
        )

    def message_count(self, step: str | None = None, phase: str | None = None) -> int:
        return sum(
            1
            for m in self.messages
            if (step is None or m.step == step) and (phase is None or m.phase == phase)
        )

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "sender": m.sender,
                    "step": m.step,
                    "phase": m.phase,
                    "kind": m.kind,
                    "bytes": m.nbytes,
                },
                sort_keys=True,
            )
            for m in self.messages
        ]
        return "\n".join(lines)

    def summary(self) -> dict:
        out: dict = {}
        for step in STEPS:
            cell = {}
            for phase in PHASES:
                cell[phase] = {
                    "bytes": self.bytes_sent(step, phase),
                    "messages": self.message_count(step, phase),
                    "interactions": self.interactions(step, phase),
                }
            out[step] = cell
        return out


def estimate_latency(
    t: Transcript,
    ch: ChannelModel,
    op_cost_table: dict[str, float] | None = None,
    report: CostReport | None = None,
) -> dict[str, float]:
    """Modeled seconds per phase: op costs + interaction delays + transfer.

    latency = sum(op_count * op_cost) + interactions * delay + bytes / bandwidth.
    The op cost table maps CostReport counter names to seconds per op and
    defaults to empty (pure communication model).
    """
    out = {}
    for phase in PHASES:
        secs = t.interactions(None, phase) * ch.delay_s
        secs += t.bytes_sent(None, phase) / ch.bandwidth_bps
        if op_cost_table and report is not None:
            for name, per_op in op_cost_table.items():
                secs += per_op * report.phase_total(phase, name)
        out[f"{phase}_s"] = secs
    return out
