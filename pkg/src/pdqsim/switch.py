"""Per-link PDQ switch state: the flow controller and the rate controller.

The flow controller decides accept-vs-pause for each header that crosses
the link. Acceptance is two-phase: the forward pass computes the grant and
annotates the header; the reverse pass commits the global outcome into the
stored per-flow rate. Forward grants are remembered (with a short TTL) so
that admission decisions made within the feedback round-trip already count
against the link budget; without this, simultaneous arrivals over-admit.

The rate controller recomputes the aggregate budget every two RTTs from
the instantaneous queue backlog, draining queues built during Early Start
switchovers and absorbing transient inconsistency after losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .criticality import criticality_key
from .header import SchedulingHeader
from .units import NS_PER_SEC


@dataclass
class PdqParams:
    early_start_rtts: float = 2.0     # admit successors within this many RTTs of a finisher
    probe_index_factor: float = 0.2   # per-list-index probe interval multiplier
    dampening_rtts: float = 0.25      # min spacing between un-pause acceptances
    capacity_mode: str = "two_kappa"  # two_kappa | kappa | all
    max_flows: int = 1000             # hard cap on stored flows
    rate_fraction: float = 1.0        # share of line rate managed for these flows
    rtt_gain: float = 0.125
    grant_ttl_rtts: float = 2.0
    entry_ttl_rtts: float = 40.0
    fallback_ttl_rtts: float = 6.0
    epoch_rtts: float = 2.0

    def validate(self) -> None:
        if self.early_start_rtts < 0:
            raise ValueError("early_start_rtts must be >= 0")
        if self.capacity_mode not in ("two_kappa", "kappa", "all"):
            raise ValueError(f"unknown capacity_mode {self.capacity_mode!r}")
        if not 0 < self.rate_fraction <= 1:
            raise ValueError("rate_fraction must be in (0, 1]")


@dataclass
class SwitchFlowEntry:
    flow_id: str
    committed_bps: int = 0            # rate committed by the reverse path
    granted_bps: int = 0              # fresh forward-path grant, pre-commit
    granted_at_ns: int = -(1 << 62)
    paused_by: str | None = None
    deadline_ns: int | None = None
    expected_tx_ns: int = 0
    rtt_ns: int = 0
    arrival_seq: int = 0
    last_seen_ns: int = 0

    def key(self):
        return criticality_key(self.deadline_ns, self.expected_tx_ns, self.flow_id)


@dataclass
class SwitchDiagnostics:
    accepts: int = 0
    pauses: int = 0
    dampened: int = 0
    evictions: int = 0
    fallback_grants: int = 0
    malformed: int = 0


class PdqSwitchLink:
    """State for one directed link of one PDQ switch."""

    def __init__(self, switch_id: str, rate_bps: int, params: PdqParams,
                 nominal_rtt_ns: int):
        params.validate()
        self.switch_id = switch_id
        self.rate_bps = rate_bps
        self.params = params
        self.line_rate_bps = int(rate_bps * params.rate_fraction)
        self.ctrl_rate_bps = self.line_rate_bps
        self.rtt_avg_ns = float(nominal_rtt_ns)
        self.entries: list[SwitchFlowEntry] = []
        self.last_accept_ns = -(1 << 62)
        self.last_accept_flow: str | None = None
        self.fallback_seen: dict[str, int] = {}
        self.diag = SwitchDiagnostics()
        self._seq = 0

    # --- list bookkeeping -------------------------------------------------

    def find(self, flow_id: str) -> tuple[int, SwitchFlowEntry | None]:
        for i, e in enumerate(self.entries):
            if e.flow_id == flow_id:
                return i, e
        return -1, None

    def remove(self, flow_id: str) -> bool:
        i, e = self.find(flow_id)
        if e is not None:
            self.entries.pop(i)
            return True
        return False

    def _insert(self, entry: SwitchFlowEntry) -> int:
        key = entry.key()
        i = 0
        while i < len(self.entries) and self.entries[i].key() < key:
            i += 1
        self.entries.insert(i, entry)
        return i

    def _reposition(self, entry: SwitchFlowEntry) -> int:
        self.entries.remove(entry)
        return self._insert(entry)

    def effective_bps(self, e: SwitchFlowEntry, now: int) -> int:
        """The switch's current belief of the flow's sending rate."""
        grant = 0
        if now - e.granted_at_ns <= self.params.grant_ttl_rtts * self.rtt_avg_ns:
            grant = e.granted_bps
        return max(e.committed_bps, grant)

    def sending_count(self, now: int) -> int:
        return sum(1 for e in self.entries if self.effective_bps(e, now) > 0)

    def capacity(self, now: int) -> int:
        mode = self.params.capacity_mode
        if mode == "all":
            return self.params.max_flows
        kappa = self.sending_count(now)
        if mode == "kappa":
            return min(max(1, kappa), self.params.max_flows)
        return min(max(2, 2 * kappa), self.params.max_flows)

    # --- flow controller -------------------------------------------------

    def availbw(self, j: int, now: int) -> int:
        """Bandwidth available to the flow at list index j.

        Walks the more-critical prefix: nearly-completed flows (within K
        RTTs of finishing) consume the Early Start budget X instead of
        bandwidth; everything else accumulates its rate into A.
        """
        if not 0 <= j <= len(self.entries):
            raise ValueError(f"index {j} out of range")
        k = self.params.early_start_rtts
        x = 0.0
        agg = 0
        cap = self.ctrl_rate_bps
        for e in self.entries[:j]:
            rtt = max(e.rtt_ns, 1)
            ratio = e.expected_tx_ns / rtt
            if ratio < k and x < k:
                x += ratio
            else:
                agg += self.effective_bps(e, now)
            if agg >= cap:
                return 0
        return cap - agg

    def _dampened(self, flow_id: str, now: int) -> bool:
        window = self.params.dampening_rtts * self.rtt_avg_ns
        return (now - self.last_accept_ns) < window and self.last_accept_flow != flow_id

    def _pause(self, e: SwitchFlowEntry, h: SchedulingHeader) -> None:
        h.paused_by = self.switch_id
        e.paused_by = self.switch_id
        e.granted_bps = 0
        self.diag.pauses += 1

    def on_forward(self, h: SchedulingHeader, flow_id: str, now: int) -> SchedulingHeader:
        """Process a forward-path scheduling header (data, probe or SYN)."""
        if h.rate_bps < 0:
            self.diag.malformed += 1
            h.rate_bps = 0
        if h.paused_by is not None and h.paused_by != self.switch_id:
            self.remove(flow_id)
            self.fallback_seen.pop(flow_id, None)
            return h
        idx, e = self.find(flow_id)
        if e is None:
            cap = self.capacity(now)
            key = criticality_key(h.deadline_ns, h.expected_tx_ns, flow_id)
            admitted = False
            if len(self.entries) < cap or (self.entries and key < self.entries[-1].key()):
                e = SwitchFlowEntry(flow_id, deadline_ns=h.deadline_ns,
                                    expected_tx_ns=h.expected_tx_ns, rtt_ns=h.rtt_ns,
                                    arrival_seq=self._seq, last_seen_ns=now)
                self._seq += 1
                self._insert(e)
                while len(self.entries) > cap:
                    evicted = self.entries.pop()
                    self.diag.evictions += 1
                    self.fallback_seen[evicted.flow_id] = evicted.last_seen_ns
                admitted = any(x is e for x in self.entries)
                if admitted:
                    self.fallback_seen.pop(flow_id, None)
            if not admitted:
                rate = min(h.rate_bps, self.rcp_fallback_rate(now, register=flow_id))
                h.rate_bps = rate
                if rate == 0:
                    h.paused_by = self.switch_id
                else:
                    self.diag.fallback_grants += 1
                    if h.paused_by == self.switch_id:
                        h.paused_by = None  # fallback re-grant lifts our own pause
                return h
        e.deadline_ns = h.deadline_ns
        e.expected_tx_ns = h.expected_tx_ns
        e.rtt_ns = h.rtt_ns
        e.last_seen_ns = now
        idx = self._reposition(e)
        grant = min(self.availbw(idx, now), h.rate_bps)
        if grant > 0:
            non_sending = self.effective_bps(e, now) == 0
            if non_sending and self._dampened(flow_id, now):
                self._pause(e, h)
                self.diag.dampened += 1
            else:
                h.paused_by = None
                h.rate_bps = grant
                e.granted_bps = grant
                e.granted_at_ns = now
                self.diag.accepts += 1
                if non_sending:
                    self.last_accept_ns = now
                    self.last_accept_flow = flow_id
        else:
            self._pause(e, h)
        return h

    def on_reverse(self, h: SchedulingHeader, flow_id: str, now: int) -> SchedulingHeader:
        """Process a reverse-path header (ACK/SYN-ACK): commit the decision."""
        if h.rtt_ns > 0:
            gain = self.params.rtt_gain
            self.rtt_avg_ns += gain * (h.rtt_ns - self.rtt_avg_ns)
        if h.paused_by is not None and h.paused_by != self.switch_id:
            self.remove(flow_id)
            self.fallback_seen.pop(flow_id, None)
        if h.paused_by is not None:
            h.rate_bps = 0
        idx, e = self.find(flow_id)
        if e is not None:
            e.paused_by = h.paused_by
            h.probe_interval_rtts = max(h.probe_interval_rtts,
                                        self.params.probe_index_factor * idx)
            e.committed_bps = h.rate_bps
            e.granted_bps = 0
            e.last_seen_ns = now
        return h

    def on_term(self, flow_id: str) -> None:
        self.remove(flow_id)
        self.fallback_seen.pop(flow_id, None)

    # --- RCP fallback ------------------------------------------------------

    def rcp_fallback_rate(self, now: int, register: str | None = None) -> int:
        """Equal share of the capacity left after the stored flows.

        Serves flows that do not fit in the list; the exact fallback flow
        count comes from recently seen, unstored, not-paused-elsewhere flows.
        """
        ttl = self.params.fallback_ttl_rtts * self.rtt_avg_ns
        self.fallback_seen = {fid: t for fid, t in self.fallback_seen.items()
                              if now - t <= ttl}
        if register is not None:
            self.fallback_seen[register] = now
        used = sum(self.effective_bps(e, now) for e in self.entries)
        leftover = max(0, self.ctrl_rate_bps - used)
        return leftover // max(1, len(self.fallback_seen))

    # --- rate controller ---------------------------------------------------

    def rate_controller_update(self, queue_bytes: int, now: int) -> int:
        """Recompute the aggregate budget from the queue backlog."""
        drain_bps = round(queue_bytes * 8 * NS_PER_SEC / (2 * self.rtt_avg_ns))
        self.ctrl_rate_bps = max(0, min(self.line_rate_bps, self.line_rate_bps - drain_bps))
        self._expire_entries(now)
        return self.ctrl_rate_bps

    def epoch_interval_ns(self) -> int:
        return max(1, round(self.params.epoch_rtts * self.rtt_avg_ns))

    def _expire_entries(self, now: int) -> None:
        ttl = self.params.entry_ttl_rtts * self.rtt_avg_ns
        self.entries = [e for e in self.entries if now - e.last_seen_ns <= ttl]

    # --- debug -------------------------------------------------------------

    def is_sorted(self) -> bool:
        keys = [e.key() for e in self.entries]
        return all(keys[i] < keys[i + 1] for i in range(len(keys) - 1))
