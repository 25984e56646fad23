"""Deterministic discrete-event core.

A simulation is a virtual clock plus a heap of (fire_at, sequence) ordered
events. Links model FIFO tail-drop queues with explicit transmission,
propagation and processing delays; a packet of size s occupies the
transmitter for exactly s/rate. Two runs with the same seed and scenario
process identical event sequences.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable

from .header import SchedulingHeader
from .units import tx_time_ns

SYN = "SYN"
SYN_ACK = "SYN-ACK"
DATA = "DATA"
ACK = "ACK"
PROBE = "PROBE"
TERM = "TERM"

FORWARD_KINDS = (SYN, DATA, PROBE, TERM)
REVERSE_KINDS = (SYN_ACK, ACK)


class SimError(Exception):
    """Fatal logic error inside the simulation (abort with diagnostic)."""


@dataclass
class Event:
    fire_at: int
    sequence: int
    kind: str
    fn: Callable[[], None] = field(compare=False)

    def sort_key(self):
        return (self.fire_at, self.sequence)


@dataclass
class Packet:
    kind: str
    flow_id: str
    src: str
    dst: str
    route: tuple[str, ...]
    wire_bytes: int
    payload_bytes: int = 0
    header: SchedulingHeader | None = None
    send_time_ns: int = 0
    offset: int = 0
    length: int = 0
    echo_send_time_ns: int = 0
    ack_offset: int = -1
    ack_length: int = 0
    retx: bool = False


class Node:
    """A host or switch; subclasses implement packet handling."""

    def __init__(self, node_id: str):
        self.id = node_id

    def handle_packet(self, sim: "Simulator", pkt: Packet, in_link: "Link") -> None:
        raise NotImplementedError


class Link:
    """Directed link with a FIFO tail-drop byte queue.

    Service is serialized through busy_until; waiting counters exclude the
    packet currently being transmitted. Queue occupancy never exceeds
    capacity_bytes; overflowing packets are dropped, which is a modeled
    outcome rather than an error.
    """

    def __init__(self, src: str, dst: str, rate_bps: int, prop_ns: int,
                 proc_ns: int, capacity_bytes: int):
        self.id = f"{src}->{dst}"
        self.src = src
        self.dst = dst
        self.rate_bps = rate_bps
        self.prop_ns = prop_ns
        self.proc_ns = proc_ns
        self.capacity_bytes = capacity_bytes
        self.loss_rate = 0.0
        self.loss_rng: random.Random | None = None
        self.busy_until = 0
        self.wait_bytes = 0
        self.wait_data_packets = 0
        self.attempted_bytes = 0
        self.delivered_bytes = 0
        self.delivered_payload_bytes = 0
        self.delivered_packets = 0
        self.dropped_bytes = 0
        self.drop_count = 0
        self.random_drop_count = 0
        self.reverse: "Link | None" = None  # wired by the topology

    @property
    def in_flight_bytes(self) -> int:
        return self.attempted_bytes - self.delivered_bytes - self.dropped_bytes

    def enqueue(self, sim: "Simulator", pkt: Packet) -> bool:
        """Queue a packet; returns False if it was dropped."""
        if pkt.wire_bytes <= 0:
            raise SimError(f"packet with non-positive size on {self.id}")
        now = sim.now
        self.attempted_bytes += pkt.wire_bytes
        dropped = None
        if self.loss_rate > 0.0 and self.loss_rng is not None \
                and self.loss_rng.random() < self.loss_rate:
            dropped = "loss"
            self.random_drop_count += 1
        elif self.wait_bytes + pkt.wire_bytes > self.capacity_bytes:
            dropped = "overflow"
        if dropped is not None:
            self.drop_count += 1
            self.dropped_bytes += pkt.wire_bytes
            sim.metrics.record_drop(self, pkt, now, dropped)
            return False
        start = max(now, self.busy_until)
        end = start + tx_time_ns(pkt.wire_bytes, self.rate_bps)
        self.busy_until = end
        self.wait_bytes += pkt.wire_bytes
        if pkt.kind == DATA:
            self.wait_data_packets += 1
        sim.metrics.queue_sample(self, now)
        sim.schedule_at(start, "tx-start", lambda: self._tx_start(sim, pkt, start, end))
        sim.schedule_at(end + self.prop_ns + self.proc_ns, "packet-arrival",
                        lambda: self._deliver(sim, pkt))
        return True

    def _tx_start(self, sim: "Simulator", pkt: Packet, start: int, end: int) -> None:
        self.wait_bytes -= pkt.wire_bytes
        if pkt.kind == DATA:
            self.wait_data_packets -= 1
        sim.metrics.record_tx(self, pkt, start, end)
        sim.metrics.queue_sample(self, start)

    def _deliver(self, sim: "Simulator", pkt: Packet) -> None:
        self.delivered_bytes += pkt.wire_bytes
        self.delivered_payload_bytes += pkt.payload_bytes
        self.delivered_packets += 1
        sim.nodes[self.dst].handle_packet(sim, pkt, self)


class Simulator:
    """Single-threaded event loop owning all simulation state."""

    def __init__(self, seed: int = 0, metrics=None, max_events: int = 50_000_000):
        from .metrics import Metrics  # local import to avoid a cycle
        self.now = 0
        self.seed = seed
        self.metrics = metrics if metrics is not None else Metrics()
        self.max_events = max_events
        self.nodes: dict[str, Node] = {}
        self.links: dict[tuple[str, str], Link] = {}
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._processed = 0
        self._rngs: dict[str, random.Random] = {}

    def rng(self, name: str) -> random.Random:
        """Named deterministic RNG stream derived from the scenario seed."""
        if name not in self._rngs:
            self._rngs[name] = random.Random(f"{self.seed}:{name}")
        return self._rngs[name]

    def add_node(self, node: Node) -> None:
        if node.id in self.nodes:
            raise SimError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node

    def add_link(self, link: Link) -> None:
        key = (link.src, link.dst)
        if key in self.links:
            raise SimError(f"duplicate link {link.id}")
        self.links[key] = link

    def link(self, src: str, dst: str) -> Link:
        return self.links[(src, dst)]

    def schedule_at(self, fire_at: int, kind: str, fn: Callable[[], None]) -> Event:
        if fire_at < self.now:
            raise SimError(
                f"event {kind!r} scheduled at {fire_at} ns in the past (now={self.now})")
        ev = Event(fire_at, self._seq, kind, fn)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, ev.sequence, ev))
        return ev

    def schedule_in(self, delay: int, kind: str, fn: Callable[[], None]) -> Event:
        return self.schedule_at(self.now + delay, kind, fn)

    def run(self, until: int | None = None) -> None:
        """Process all events with fire_at <= until (all events if None)."""
        while self._heap:
            fire_at, _, ev = self._heap[0]
            if until is not None and fire_at > until:
                break
            heapq.heappop(self._heap)
            if fire_at < self.now:
                raise SimError("time travel: event fires before current clock")
            self.now = fire_at
            self._processed += 1
            if self._processed > self.max_events:
                raise SimError(f"livelock guard: exceeded {self.max_events} events")
            ev.fn()
        if until is not None and self.now < until:
            self.now = until

    def check_conservation(self) -> None:
        """Per link: injected bytes = delivered + dropped + in flight."""
        for link in self.links.values():
            residual = link.in_flight_bytes
            if residual < 0:
                raise SimError(f"conservation violated on {link.id}: {residual}")
