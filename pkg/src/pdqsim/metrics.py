"""Metric collection and serialization.

Collects per-flow outcomes, per-link busy time (binned and as exact merged
intervals), queue-length samples and drop/probe counters while a simulation
runs, then freezes everything into a MetricsReport that can be written as
CSV files plus a summary. Utilization counts all bytes on the wire; goodput
excludes protocol headers.
"""

from __future__ import annotations

import csv
import math
import os
from bisect import bisect_left
from dataclasses import dataclass, field

from .units import NS_PER_MS

UTIL_BIN_NS = 100_000  # 100 us


@dataclass
class FlowRecord:
    flow_id: str
    src: str
    dst: str
    size_bytes: int
    start_ns: int
    deadline_ns: int | None = None
    completion_ns: int | None = None
    terminated_ns: int | None = None
    delivered_bytes: int = 0
    retransmissions: int = 0
    probes_sent: int = 0
    parent_id: str | None = None

    @property
    def status(self) -> str:
        if self.completion_ns is not None:
            return "completed"
        if self.terminated_ns is not None:
            return "terminated"
        return "unfinished"

    @property
    def deadline_met(self) -> bool:
        return (self.deadline_ns is not None and self.completion_ns is not None
                and self.completion_ns <= self.deadline_ns)

    @property
    def fct_ns(self) -> int | None:
        if self.completion_ns is None:
            return None
        return self.completion_ns - self.start_ns


@dataclass
class _BinStat:
    busy_ns: int = 0
    wire_bytes: int = 0
    payload_bytes: int = 0
    data_packets: int = 0


class Metrics:
    """Live collector; owned by a single simulation instance."""

    def __init__(self, util_bin_ns: int = UTIL_BIN_NS, sample_queues: bool = True):
        self.util_bin_ns = util_bin_ns
        self.sample_queues = sample_queues
        self.flows: dict[str, FlowRecord] = {}
        self.bins: dict[str, dict[int, _BinStat]] = {}
        self.busy_intervals: dict[str, list[list[int]]] = {}
        self.queue_samples: list[tuple[int, str, int, int]] = []
        self.max_wait_data_packets: dict[str, int] = {}
        self.drops: list[tuple[int, str, str, str]] = []
        self.probe_times: dict[str, list[int]] = {}
        self.termination_log: list[dict] = []

    # --- engine hooks ---------------------------------------------------

    def record_tx(self, link, pkt, start_ns: int, end_ns: int) -> None:
        bins = self.bins.setdefault(link.id, {})
        t = start_ns
        while t < end_ns:
            idx = t // self.util_bin_ns
            bin_end = (idx + 1) * self.util_bin_ns
            span = min(end_ns, bin_end) - t
            b = bins.setdefault(idx, _BinStat())
            b.busy_ns += span
            t = min(end_ns, bin_end)
        whole = bins[start_ns // self.util_bin_ns]
        whole.wire_bytes += pkt.wire_bytes
        whole.payload_bytes += pkt.payload_bytes
        if pkt.kind == "DATA":
            whole.data_packets += 1
        ivals = self.busy_intervals.setdefault(link.id, [])
        if ivals and start_ns <= ivals[-1][1]:
            ivals[-1][1] = max(ivals[-1][1], end_ns)
        else:
            ivals.append([start_ns, end_ns])
        if pkt.kind == "PROBE":
            self.probe_times.setdefault(link.id, []).append(start_ns)

    def queue_sample(self, link, t_ns: int) -> None:
        prev = self.max_wait_data_packets.get(link.id, 0)
        if link.wait_data_packets > prev:
            self.max_wait_data_packets[link.id] = link.wait_data_packets
        if self.sample_queues:
            self.queue_samples.append((t_ns, link.id, link.wait_bytes, link.wait_data_packets))

    def record_drop(self, link, pkt, t_ns: int, reason: str) -> None:
        self.drops.append((t_ns, link.id, pkt.kind, reason))

    # --- endpoint hooks ---------------------------------------------------

    def flow_started(self, flow_id: str, src: str, dst: str, size_bytes: int,
                     start_ns: int, deadline_ns: int | None,
                     parent_id: str | None = None) -> None:
        self.flows[flow_id] = FlowRecord(flow_id, src, dst, size_bytes, start_ns,
                                         deadline_ns, parent_id=parent_id)

    def flow_completed(self, flow_id: str, t_ns: int) -> None:
        rec = self.flows[flow_id]
        if rec.completion_ns is None:
            rec.completion_ns = t_ns

    def flow_terminated(self, flow_id: str, t_ns: int, detail: dict | None = None) -> None:
        rec = self.flows[flow_id]
        if rec.terminated_ns is None and rec.completion_ns is None:
            rec.terminated_ns = t_ns
        if detail is not None:
            self.termination_log.append(detail)

    def flow_progress(self, flow_id: str, delivered_bytes: int) -> None:
        self.flows[flow_id].delivered_bytes = delivered_bytes

    def probe_sent(self, flow_id: str) -> None:
        if flow_id in self.flows:
            self.flows[flow_id].probes_sent += 1

    def retransmission(self, flow_id: str) -> None:
        if flow_id in self.flows:
            self.flows[flow_id].retransmissions += 1

    # --- queries ---------------------------------------------------

    def busy_ns_in(self, link_id: str, t0: int, t1: int) -> int:
        """Exact busy time of a link inside [t0, t1)."""
        ivals = self.busy_intervals.get(link_id, [])
        if not ivals or t1 <= t0:
            return 0
        total = 0
        i = bisect_left([iv[1] for iv in ivals], t0)
        while i < len(ivals) and ivals[i][0] < t1:
            total += max(0, min(ivals[i][1], t1) - max(ivals[i][0], t0))
            i += 1
        return total

    def utilization(self, link_id: str, t0: int, t1: int) -> float:
        if t1 <= t0:
            return 0.0
        return self.busy_ns_in(link_id, t0, t1) / (t1 - t0)


def _percentile(sorted_vals: list[int], q: float) -> int:
    if not sorted_vals:
        return 0
    idx = max(0, math.ceil(q * len(sorted_vals)) - 1)
    return sorted_vals[idx]


@dataclass
class MetricsReport:
    """Frozen results of one run: flow table, link table, time series, summary."""

    flows: list[dict] = field(default_factory=list)
    links: list[dict] = field(default_factory=list)
    timeseries: list[dict] = field(default_factory=list)
    queues: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @classmethod
    def build(cls, sim, parents_only: bool = False) -> "MetricsReport":
        m = sim.metrics
        report = cls()
        flow_rows = []
        for rec in m.flows.values():
            if parents_only and rec.parent_id is not None:
                continue
            flow_rows.append({
                "flow_id": rec.flow_id,
                "src": rec.src,
                "dst": rec.dst,
                "parent": rec.parent_id or "",
                "size_bytes": rec.size_bytes,
                "start_ns": rec.start_ns,
                "deadline_ns": "" if rec.deadline_ns is None else rec.deadline_ns,
                "completion_ns": "" if rec.completion_ns is None else rec.completion_ns,
                "status": rec.status,
                "deadline_met": int(rec.deadline_met),
                "delivered_bytes": rec.delivered_bytes,
                "retransmissions": rec.retransmissions,
                "probes_sent": rec.probes_sent,
            })
        flow_rows.sort(key=lambda r: (r["start_ns"], r["flow_id"]))
        report.flows = flow_rows

        for (src, dst), link in sorted(sim.links.items()):
            busy = m.busy_ns_in(link.id, 0, sim.now) if sim.now else 0
            report.links.append({
                "link": link.id,
                "rate_bps": link.rate_bps,
                "delivered_bytes": link.delivered_bytes,
                "delivered_payload_bytes": link.delivered_payload_bytes,
                "delivered_packets": link.delivered_packets,
                "drop_count": link.drop_count,
                "random_drop_count": link.random_drop_count,
                "utilization": round(busy / sim.now, 6) if sim.now else 0.0,
                "max_queued_data_packets": m.max_wait_data_packets.get(link.id, 0),
            })

        for link_id in sorted(m.bins):
            for idx in sorted(m.bins[link_id]):
                b = m.bins[link_id][idx]
                report.timeseries.append({
                    "link": link_id,
                    "bin_start_ns": idx * m.util_bin_ns,
                    "busy_fraction": round(b.busy_ns / m.util_bin_ns, 6),
                    "wire_bytes": b.wire_bytes,
                    "payload_bytes": b.payload_bytes,
                    "data_packets": b.data_packets,
                })

        for (t, link_id, wb, wd) in m.queue_samples:
            report.queues.append({
                "t_ns": t, "link": link_id,
                "wait_bytes": wb, "wait_data_packets": wd,
            })

        completed = [r for r in flow_rows if r["status"] == "completed"]
        fcts = sorted(r["completion_ns"] - r["start_ns"] for r in completed)
        deadline_flows = [r for r in flow_rows if r["deadline_ns"] != ""]
        met = sum(r["deadline_met"] for r in deadline_flows)
        report.summary = {
            "flows": len(flow_rows),
            "completed": len(completed),
            "terminated": sum(1 for r in flow_rows if r["status"] == "terminated"),
            "unfinished": sum(1 for r in flow_rows if r["status"] == "unfinished"),
            "deadline_flows": len(deadline_flows),
            "deadline_met": met,
            "application_throughput": round(met / len(deadline_flows), 6) if deadline_flows else "",
            "mean_fct_ms": round(sum(fcts) / len(fcts) / NS_PER_MS, 6) if fcts else "",
            "median_fct_ms": round(_percentile(fcts, 0.5) / NS_PER_MS, 6) if fcts else "",
            "p99_fct_ms": round(_percentile(fcts, 0.99) / NS_PER_MS, 6) if fcts else "",
            "total_delivered_payload_bytes": sum(r["delivered_bytes"] for r in flow_rows),
            "drops": sum(1 for _ in m.drops),
            "duration_ns": sim.now,
        }
        return report

    @property
    def mean_fct_ns(self) -> float:
        fcts = [r["completion_ns"] - r["start_ns"] for r in self.flows
                if r["status"] == "completed"]
        return sum(fcts) / len(fcts) if fcts else 0.0

    @property
    def application_throughput(self) -> float:
        deadline_flows = [r for r in self.flows if r["deadline_ns"] != ""]
        if not deadline_flows:
            return 1.0
        return sum(r["deadline_met"] for r in deadline_flows) / len(deadline_flows)

    def write_csv(self, out_dir: str) -> list[str]:
        """Write flows.csv, links_timeseries.csv, queues.csv and summary.txt."""
        os.makedirs(out_dir, exist_ok=True)
        written = []
        tables = [
            ("flows.csv", FLOW_COLUMNS, self.flows),
            ("links_timeseries.csv", TIMESERIES_COLUMNS, self.timeseries),
            ("queues.csv", QUEUE_COLUMNS, self.queues),
            ("links.csv", LINK_COLUMNS, self.links),
        ]
        for name, columns, rows in tables:
            path = os.path.join(out_dir, name)
            try:
                with open(path, "w", newline="") as fh:
                    writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
                    writer.writeheader()
                    writer.writerows(rows)
            except OSError as exc:
                raise OSError(f"failed writing {path}: {exc}") from exc
            written.append(path)
        path = os.path.join(out_dir, "summary.txt")
        with open(path, "w") as fh:
            fh.write(self.render_summary())
        written.append(path)
        return written

    def render_summary(self) -> str:
        lines = [f"{key}: {self.summary[key]}" for key in sorted(self.summary)]
        return "\n".join(lines) + "\n"


FLOW_COLUMNS = ["flow_id", "src", "dst", "parent", "size_bytes", "start_ns",
                "deadline_ns", "completion_ns", "status", "deadline_met",
                "delivered_bytes", "retransmissions", "probes_sent"]
TIMESERIES_COLUMNS = ["link", "bin_start_ns", "busy_fraction", "wire_bytes",
                      "payload_bytes", "data_packets"]
QUEUE_COLUMNS = ["t_ns", "link", "wait_bytes", "wait_data_packets"]
LINK_COLUMNS = ["link", "rate_bps", "delivered_bytes", "delivered_payload_bytes",
                "delivered_packets", "drop_count", "random_drop_count",
                "utilization", "max_queued_data_packets"]

_INT_FLOW_FIELDS = {"size_bytes", "start_ns", "deadline_ns", "completion_ns",
                    "deadline_met", "delivered_bytes", "retransmissions", "probes_sent"}


def read_flows_csv(path: str) -> list[dict]:
    """Parse flows.csv back into typed rows (round-trips write_csv output)."""
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for key, val in raw.items():
                if key in _INT_FLOW_FIELDS:
                    row[key] = "" if val == "" else int(val)
                else:
                    row[key] = val
            rows.append(row)
    return rows


def read_summary(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            key, _, val = line.rstrip("\n").partition(": ")
            out[key] = val
    return out
