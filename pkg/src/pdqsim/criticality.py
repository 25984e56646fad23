"""Flow criticality: the total order deciding who preempts whom.

Deadline-bearing flows are ordered by smaller deadline (EDF) and outrank
deadline-free flows; ties and deadline-free flows are ordered by smaller
expected transmission time (SJF); any remaining tie breaks by flow id.
"""

from __future__ import annotations

from dataclasses import dataclass

from .units import NS_PER_MS


@dataclass(frozen=True)
class FlowSummary:
    flow_id: str
    expected_tx_ns: int
    deadline_ns: int | None = None


def criticality_key(deadline_ns: int | None, expected_tx_ns: int, flow_id: str):
    """Sort key: lower sorts first = more critical."""
    if deadline_ns is None:
        return (1, 0, expected_tx_ns, flow_id)
    return (0, deadline_ns, expected_tx_ns, flow_id)


def compare_criticality(a: FlowSummary, b: FlowSummary) -> int:
    """-1 if a is more critical than b, 1 if less, 0 never (total order)."""
    ka = criticality_key(a.deadline_ns, a.expected_tx_ns, a.flow_id)
    kb = criticality_key(b.deadline_ns, b.expected_tx_ns, b.flow_id)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def aging_adjust(expected_tx_ns: int, waiting_ns: int, alpha: float) -> int:
    """Shrink the advertised transmission time of a long-waiting flow.

    The adjusted value is expected_tx / 2^(alpha * waiting / 100 ms), so an
    alpha of 1 halves it for every 100 ms spent waiting. alpha = 0 disables
    aging.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0 or waiting_ns <= 0:
        return expected_tx_ns
    return round(expected_tx_ns / 2 ** (alpha * waiting_ns / (100 * NS_PER_MS)))


SIZE_ESTIMATE_STEP_BYTES = 50_000


def estimated_size_bytes(sent_bytes: int, step: int = SIZE_ESTIMATE_STEP_BYTES) -> int:
    """Size estimate for senders without flow size knowledge.

    The estimate only changes at each 50 KByte boundary of data already
    sent, so criticality is not recomputed per packet.
    """
    return (sent_bytes // step + 1) * step
