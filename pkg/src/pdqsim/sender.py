"""Flow endpoints: the sender state machine and the receiver.

The sender is protocol-agnostic plumbing around explicit rate feedback: it
opens with a SYN carrying a scheduling header, paces DATA at whatever rate
the network's ACKs command, probes while paused, retransmits on timeout,
early-terminates hopeless deadline flows, and closes with a TERM once all
bytes are acknowledged. PDQ, RCP and the simplified D3 all drive it purely
through the header fields they write at switches.

The receiver copies each forward header into an ACK, clamping the rate to
what it can process.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .criticality import aging_adjust, estimated_size_bytes
from .engine import ACK, DATA, PROBE, SYN, SYN_ACK, TERM, Packet, Simulator
from .header import CONTROL_PACKET_BYTES, DATA_OVERHEAD_BYTES, SchedulingHeader
from .units import tx_time_ns, us
from .workload import FlowSpec

logger = logging.getLogger(__name__)


@dataclass
class EndpointParams:
    mss_bytes: int = 1500
    nominal_rtt_ns: int = us(150)
    rtt_gain: float = 0.125
    retx_rtts: float = 3.0
    default_probe_rtts: float = 1.0
    aging_alpha: float = 0.0
    criticality_mode: str = "exact"   # exact | estimated | random
    pseudo_size_range: tuple[int, int] = (2_000, 198_000)


def receiver_on_data(h: SchedulingHeader, receiver_max_rate_bps: int) -> SchedulingHeader:
    """ACK header: a copy of the forward header with the rate clamped."""
    ack = h.copy()
    ack.rate_bps = min(ack.rate_bps, receiver_max_rate_bps)
    return ack


class IntervalSet:
    """Sorted disjoint byte intervals with cheap union."""

    def __init__(self):
        self.intervals: list[list[int]] = []

    def add(self, lo: int, hi: int) -> None:
        if hi <= lo:
            return
        merged = []
        placed = False
        for iv in self.intervals:
            if iv[1] < lo or iv[0] > hi:
                if not placed and iv[0] > hi:
                    merged.append([lo, hi])
                    placed = True
                merged.append(iv)
            else:
                lo = min(lo, iv[0])
                hi = max(hi, iv[1])
        if not placed:
            merged.append([lo, hi])
            merged.sort()
        self.intervals = merged

    @property
    def covered(self) -> int:
        return sum(hi - lo for lo, hi in self.intervals)

    def covers(self, size: int) -> bool:
        return (len(self.intervals) == 1 and self.intervals[0][0] <= 0
                and self.intervals[0][1] >= size)


class FlowCollector:
    """Receiver-side progress of one (possibly multipath) flow."""

    def __init__(self, flow_id: str, size_bytes: int):
        self.flow_id = flow_id
        self.size_bytes = size_bytes
        self.intervals = IntervalSet()
        self.completed_at: int | None = None

    def on_payload(self, sim: Simulator, offset: int, length: int) -> None:
        self.intervals.add(offset, offset + length)
        sim.metrics.flow_progress(self.flow_id, min(self.intervals.covered, self.size_bytes))
        if self.completed_at is None and self.intervals.covers(self.size_bytes):
            self.completed_at = sim.now
            sim.metrics.flow_completed(self.flow_id, sim.now)


class Receiver:
    """Per-flow receive endpoint living on the destination host."""

    def __init__(self, flow_id: str, collector: FlowCollector, max_rate_bps: int):
        self.flow_id = flow_id
        self.collector = collector
        self.max_rate_bps = max_rate_bps

    def build_ack(self, sim: Simulator, pkt: Packet) -> Packet | None:
        if pkt.kind == TERM:
            return None
        if pkt.kind == DATA and pkt.length > 0:
            self.collector.on_payload(sim, pkt.offset, pkt.length)
        ack_kind = SYN_ACK if pkt.kind == SYN else ACK
        return Packet(
            kind=ack_kind, flow_id=pkt.flow_id, src=pkt.dst, dst=pkt.src,
            route=tuple(reversed(pkt.route)), wire_bytes=CONTROL_PACKET_BYTES,
            header=receiver_on_data(pkt.header, self.max_rate_bps),
            send_time_ns=sim.now, echo_send_time_ns=pkt.send_time_ns,
            ack_offset=pkt.offset if pkt.kind == DATA else -1,
            ack_length=pkt.length if pkt.kind == DATA else 0,
            retx=pkt.retx)


INIT = "init"
RUNNING = "running"
DONE = "done"
FAILED = "failed"


class Sender:
    """Send endpoint for one flow (or one multipath subflow)."""

    def __init__(self, sim: Simulator, spec: FlowSpec, route: tuple[str, ...],
                 max_rate_bps: int, params: EndpointParams, send_fn,
                 on_done=None):
        self.sim = sim
        self.spec = spec
        self.flow_id = spec.flow_id
        self.route = route
        self.max_rate_bps = max_rate_bps
        self.params = params
        self._send = send_fn                    # enqueues a packet on the access link
        self.on_done = on_done                  # multipath coordinator hook
        self.state = INIT
        self.rate_bps = 0
        self.paused_by: str | None = None
        self.probe_interval_rtts = params.default_probe_rtts
        self.rtt_ns = float(params.nominal_rtt_ns)
        self.unsent: list[list[int]] = [[0, spec.size_bytes]]  # [offset, end) ranges
        self.resend: list[tuple[int, int]] = []
        self.inflight: dict[int, tuple[int, int]] = {}  # offset -> (length, sent_at)
        self.retx_offsets: set[int] = set()
        self.acked_bytes = 0
        self.sent_bytes = 0
        self.probes_sent = 0
        self.started_at = spec.start_ns
        self.pause_history: list[list[int]] = []
        self._paused_since: int | None = None
        self._pace_gen = 0
        self._probe_gen = 0
        self._pace_armed = False
        self._last_depart_ns: int | None = None
        self._term_sent = False
        if params.criticality_mode == "random":
            lo, hi = params.pseudo_size_range
            self.pseudo_size = sim.rng("criticality").randint(lo, hi)
        else:
            self.pseudo_size = None

    # --- flow bookkeeping --------------------------------------------------

    @property
    def assigned_bytes(self) -> int:
        pending = sum(hi - lo for lo, hi in self.unsent)
        pending += sum(length for _, length in self.resend)
        pending += sum(length for length, _ in self.inflight.values())
        return self.acked_bytes + pending

    @property
    def remaining_bytes(self) -> int:
        return self.assigned_bytes - self.acked_bytes

    def expected_tx_ns(self) -> int:
        mode = self.params.criticality_mode
        if mode == "estimated":
            basis = estimated_size_bytes(self.sent_bytes)
        elif mode == "random":
            basis = self.pseudo_size
        else:
            basis = self.remaining_bytes
        value = tx_time_ns(max(basis, 1), self.max_rate_bps)
        if self.params.aging_alpha > 0:
            value = aging_adjust(value, self._waiting_ns(self.sim.now),
                                 self.params.aging_alpha)
        return value

    def _waiting_ns(self, now: int) -> int:
        return sum((end if end is not None else now) - start
                   for start, end in self.pause_history)

    def _mark_paused(self, now: int) -> None:
        if self._paused_since is None:
            self._paused_since = now
            self.pause_history.append([now, None])

    def _mark_sending(self, now: int) -> None:
        if self._paused_since is not None:
            self.pause_history[-1][1] = now
            self._paused_since = None

    def build_header(self) -> SchedulingHeader:
        return SchedulingHeader(
            rate_bps=self.max_rate_bps,
            paused_by=self.paused_by,
            deadline_ns=self.spec.deadline_ns,
            expected_tx_ns=self.expected_tx_ns(),
            probe_interval_rtts=self.probe_interval_rtts,
            rtt_ns=round(self.rtt_ns))

    # --- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self.sim.schedule_at(self.spec.start_ns, "flow-start", self._send_syn)
        self._mark_paused(self.spec.start_ns)
        if self.spec.deadline_ns is not None:
            self.sim.schedule_at(self.spec.deadline_ns, "deadline-check",
                                 lambda: self.check_early_termination())

    def _send_syn(self, retx: bool = False) -> None:
        if self.state != INIT:
            return
        pkt = Packet(SYN, self.flow_id, self.route[0], self.route[-1], self.route,
                     wire_bytes=CONTROL_PACKET_BYTES, header=self.build_header(),
                     send_time_ns=self.sim.now, retx=retx)
        self._send(pkt)
        timeout = round(self.params.retx_rtts * self.rtt_ns)
        self.sim.schedule_in(timeout, "timer", lambda: self._send_syn(retx=True))

    def _complete(self) -> None:
        self.state = DONE
        self._mark_sending(self.sim.now)
        self._pace_gen += 1
        self._probe_gen += 1
        self._send_term()
        if self.on_done is not None:
            self.on_done(self)

    def _send_term(self) -> None:
        if self._term_sent:
            return
        self._term_sent = True
        pkt = Packet(TERM, self.flow_id, self.route[0], self.route[-1], self.route,
                     wire_bytes=CONTROL_PACKET_BYTES, header=self.build_header(),
                     send_time_ns=self.sim.now)
        self._send(pkt)

    def terminate(self, reason: str) -> None:
        """Early termination: give up on a hopeless deadline flow."""
        if self.state in (DONE, FAILED):
            return
        self.state = FAILED
        self._pace_gen += 1
        self._probe_gen += 1
        self.sim.metrics.flow_terminated(self.flow_id, self.sim.now, detail={
            "flow_id": self.flow_id, "t_ns": self.sim.now, "reason": reason,
            "remaining_bytes": self.remaining_bytes, "rate_bps": self.rate_bps,
            "rtt_ns": round(self.rtt_ns), "deadline_ns": self.spec.deadline_ns,
            "max_rate_bps": self.max_rate_bps})
        self._send_term()
        if self.on_done is not None:
            self.on_done(self)

    def check_early_termination(self) -> bool:
        """TERM when the deadline is provably unreachable (three conditions)."""
        if self.spec.deadline_ns is None or self.state in (DONE, FAILED):
            return False
        now = self.sim.now
        deadline = self.spec.deadline_ns
        if now > deadline:
            self.terminate("deadline-passed")
            return True
        tx_left = tx_time_ns(max(self.remaining_bytes, 1), self.max_rate_bps)
        if now + tx_left > deadline:
            self.terminate("insufficient-time")
            return True
        if self.rate_bps == 0 and self.state == RUNNING and now + self.rtt_ns > deadline:
            self.terminate("paused-too-close")
            return True
        return False

    # --- feedback ------------------------------------------------------------

    def on_reverse(self, pkt: Packet) -> None:
        if self.state in (DONE, FAILED):
            return  # late or duplicate feedback for a closed flow
        h = pkt.header
        now = self.sim.now
        if pkt.ack_offset >= 0 and pkt.ack_offset in self.inflight:
            length, _ = self.inflight.pop(pkt.ack_offset)
            self.acked_bytes += length
        if pkt.echo_send_time_ns and not pkt.retx:
            sample = now - pkt.echo_send_time_ns
            self.rtt_ns += self.params.rtt_gain * (sample - self.rtt_ns)
        if pkt.kind == SYN_ACK and self.state == INIT:
            self.state = RUNNING
        self.rate_bps = h.rate_bps
        self.paused_by = h.paused_by
        self.probe_interval_rtts = max(h.probe_interval_rtts, 1e-3)
        if self.check_early_termination():
            return
        if self.acked_bytes >= self.assigned_bytes and not self.unsent and not self.resend \
                and not self.inflight:
            self._complete()
            return
        if self.rate_bps > 0:
            self._mark_sending(now)
            self._arm_pacing()
        else:
            self._mark_paused(now)
            self._pace_gen += 1
            self._pace_armed = False
            self._arm_probe()

    # --- pacing ----------------------------------------------------------------

    def _arm_pacing(self) -> None:
        if self._pace_armed or self.state != RUNNING or self.rate_bps <= 0:
            return
        if not self.unsent and not self.resend:
            return
        self._pace_gen += 1
        gen = self._pace_gen
        at = self.sim.now
        if self._last_depart_ns is not None:
            at = max(at, self._last_depart_ns + self._spacing_ns())
        self._pace_armed = True
        self.sim.schedule_at(at, "pacing", lambda: self._depart(gen))

    def _spacing_ns(self) -> int:
        wire = min(self.params.mss_bytes, max(1, self.remaining_bytes)) + DATA_OVERHEAD_BYTES
        return tx_time_ns(wire, max(self.rate_bps, 1))

    def _next_chunk(self) -> tuple[int, int] | None:
        if self.resend:
            return self.resend.pop(0)
        while self.unsent:
            lo, hi = self.unsent[0]
            if hi <= lo:
                self.unsent.pop(0)
                continue
            length = min(self.params.mss_bytes, hi - lo)
            self.unsent[0][0] = lo + length
            if self.unsent[0][0] >= hi:
                self.unsent.pop(0)
            return (lo, length)
        return None

    def _depart(self, gen: int) -> None:
        if gen != self._pace_gen or self.state != RUNNING or self.rate_bps <= 0:
            self._pace_armed = False
            return
        chunk = self._next_chunk()
        if chunk is None:
            self._pace_armed = False
            return
        offset, length = chunk
        now = self.sim.now
        retx = offset in self.retx_offsets
        pkt = Packet(DATA, self.flow_id, self.route[0], self.route[-1], self.route,
                     wire_bytes=length + DATA_OVERHEAD_BYTES, payload_bytes=length,
                     header=self.build_header(), send_time_ns=now,
                     offset=offset, length=length, retx=retx)
        self.inflight[offset] = (length, now)
        self.sent_bytes += length
        self._last_depart_ns = now
        self._send(pkt)
        timeout = round(self.params.retx_rtts * self.rtt_ns)
        self.sim.schedule_in(timeout, "timer", lambda: self._retx_check(offset))
        self.check_early_termination()
        if self.state != RUNNING:
            self._pace_armed = False
            return
        spacing = tx_time_ns(pkt.wire_bytes, max(self.rate_bps, 1))
        gen = self._pace_gen
        if self.unsent or self.resend:
            self.sim.schedule_at(now + spacing, "pacing", lambda: self._depart(gen))
        else:
            self._pace_armed = False

    def _retx_check(self, offset: int) -> None:
        if offset not in self.inflight or self.state != RUNNING:
            return
        length, _ = self.inflight.pop(offset)
        self.retx_offsets.add(offset)
        self.resend.append((offset, length))
        self.sim.metrics.retransmission(self.flow_id)
        if self.rate_bps > 0:
            self._arm_pacing()

    # --- probing ------------------------------------------------------------

    def _arm_probe(self) -> None:
        self._probe_gen += 1
        gen = self._probe_gen
        delay = max(1, round(self.probe_interval_rtts * self.rtt_ns))
        self.sim.schedule_in(delay, "probe-timer", lambda: self._probe(gen))

    def _probe(self, gen: int) -> None:
        if gen != self._probe_gen or self.state != RUNNING or self.rate_bps > 0:
            return
        if self.check_early_termination():
            return
        pkt = Packet(PROBE, self.flow_id, self.route[0], self.route[-1], self.route,
                     wire_bytes=CONTROL_PACKET_BYTES, header=self.build_header(),
                     send_time_ns=self.sim.now)
        self.probes_sent += 1
        self.sim.metrics.probe_sent(self.flow_id)
        self._send(pkt)
        self._arm_probe()

    # --- multipath support -----------------------------------------------------

    def take_pending_ranges(self) -> list[tuple[int, int]]:
        """Strip all not-yet-sent bytes (for load shifting); keeps in-flight data."""
        ranges = [(lo, hi - lo) for lo, hi in self.unsent if hi > lo]
        ranges += list(self.resend)
        self.unsent = []
        self.resend = []
        return ranges

    def add_ranges(self, ranges: list[tuple[int, int]]) -> None:
        for offset, length in ranges:
            if length > 0:
                self.unsent.append([offset, offset + length])
        if self.rate_bps > 0 and self.state == RUNNING:
            self._arm_pacing()

    def maybe_complete_after_shift(self) -> None:
        if (self.state == RUNNING and not self.unsent and not self.resend
                and not self.inflight):
            self._complete()
