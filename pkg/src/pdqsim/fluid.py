"""Fluid-model reference schedulers.

Flows are infinitesimally divisible; rates are piecewise constant between
events (arrivals, completions, deadline crossings) and recomputed by an
allocation policy at every event:

- fair: max-min fair sharing,
- sjf: one-at-a-time by original size,
- edf: one-at-a-time by deadline,
- pdq: the centralized allocator, greedy in increasing expected
  transmission time (remaining size over maximal rate),
- d3: first-come first-reserve rate requests r = remaining/time-to-deadline
  granted in arrival order, leftover split equally as a non-negative fair
  share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

INF = math.inf
_EPS = 1e-9


@dataclass
class OracleFlow:
    flow_id: str
    size: float
    path: tuple[str, ...]  # link ids
    arrival: float = 0.0
    deadline: float | None = None
    max_rate: float = INF


@dataclass
class FluidSchedule:
    segments: dict[str, list[tuple[float, float, float]]] = field(default_factory=dict)
    completion: dict[str, float] = field(default_factory=dict)
    discarded: set[str] = field(default_factory=set)

    def mean_fct(self, flows: list[OracleFlow]) -> float:
        arr = {f.flow_id: f.arrival for f in flows}
        done = [self.completion[fid] - arr[fid] for fid in self.completion]
        return sum(done) / len(done) if done else 0.0

    def deadline_met(self, flow: OracleFlow) -> bool:
        done = self.completion.get(flow.flow_id)
        return (flow.deadline is not None and done is not None
                and done <= flow.deadline + _EPS)

    def missed_any(self, flows: list[OracleFlow]) -> bool:
        return any(f.deadline is not None and not self.deadline_met(f) for f in flows)

    def feasible(self, capacities: dict[str, float],
                 flows: list[OracleFlow]) -> bool:
        """Aggregate rate per link never exceeds capacity (checked at breakpoints)."""
        paths = {f.flow_id: f.path for f in flows}
        points = sorted({t for segs in self.segments.values() for t, _, _ in segs})
        for t in points:
            load: dict[str, float] = {}
            for fid, segs in self.segments.items():
                for (t0, t1, rate) in segs:
                    if t0 <= t < t1:
                        for link in paths[fid]:
                            load[link] = load.get(link, 0.0) + rate
            for link, total in load.items():
                if total > capacities[link] * (1 + 1e-9) + _EPS:
                    return False
        return True


class _Live:
    def __init__(self, flow: OracleFlow, seq: int):
        self.flow = flow
        self.remaining = float(flow.size)
        self.seq = seq  # arrival order for FCFS policies


def _greedy(order_key, live: list[_Live], caps: dict[str, float], now: float):
    residual = dict(caps)
    rates = {}
    for lv in sorted(live, key=order_key):
        grant = min([lv.flow.max_rate] + [residual[e] for e in lv.flow.path])
        grant = max(0.0, grant)
        rates[lv.flow.flow_id] = grant
        for e in lv.flow.path:
            residual[e] -= grant
    return rates


def _max_send_rate(flow: OracleFlow, caps: dict[str, float]) -> float:
    """Maximal sending rate: min of the flow's own cap and its path links."""
    rates = [flow.max_rate] + [caps[e] for e in flow.path]
    return min(rates)


def _alloc_pdq(live, caps, now):
    return _greedy(lambda lv: (lv.remaining / _max_send_rate(lv.flow, caps),
                               lv.flow.flow_id), live, caps, now)


def _alloc_sjf(live, caps, now):
    return _greedy(lambda lv: (lv.flow.size, lv.flow.flow_id), live, caps, now)


def _alloc_edf(live, caps, now):
    return _greedy(lambda lv: (lv.flow.deadline if lv.flow.deadline is not None else INF,
                               lv.flow.size, lv.flow.flow_id), live, caps, now)


def _alloc_fair(live, caps, now):
    """Max-min fair with per-flow rate caps (progressive filling)."""
    rates = {lv.flow.flow_id: 0.0 for lv in live}
    residual = dict(caps)
    unfrozen = {lv.flow.flow_id: lv for lv in live}
    while unfrozen:
        shares = []
        for link, cap in residual.items():
            users = [fid for fid, lv in unfrozen.items() if link in lv.flow.path]
            if users:
                shares.append((cap / len(users), link))
        rate_caps = [(lv.flow.max_rate - rates[fid], fid) for fid, lv in unfrozen.items()]
        increment = min([s for s, _ in shares] + [c for c, _ in rate_caps])
        if increment is INF or increment < 0:
            break
        increment = max(0.0, increment)
        for fid, lv in unfrozen.items():
            rates[fid] += increment
            for e in lv.flow.path:
                residual[e] -= increment
        frozen = set()
        for cap_left, fid in rate_caps:
            if cap_left - increment <= _EPS:
                frozen.add(fid)
        for share, link in shares:
            if share - increment <= _EPS:
                frozen.update(fid for fid, lv in unfrozen.items() if link in lv.flow.path)
        if not frozen:  # numerical guard
            break
        for fid in frozen:
            unfrozen.pop(fid, None)
    return rates


def _alloc_d3(live, caps, now):
    residual = dict(caps)
    rates = {}
    ordered = sorted(live, key=lambda lv: lv.seq)
    for lv in ordered:
        f = lv.flow
        if f.deadline is not None and f.deadline > now + _EPS:
            request = lv.remaining / (f.deadline - now)
        else:
            request = 0.0  # deadline-free or already late: fair share only
        grant = min([request, f.max_rate] + [residual[e] for e in f.path])
        grant = max(0.0, grant)
        rates[f.flow_id] = grant
        for e in f.path:
            residual[e] -= grant
    # Leftover goes to every flow as a non-negative equal share, realized as
    # max-min filling of the residual capacity on top of the reservations.
    bonus_flows = [_Live(OracleFlow(lv.flow.flow_id, lv.flow.size, lv.flow.path,
                                    max_rate=max(0.0, lv.flow.max_rate - rates[lv.flow.flow_id])),
                         lv.seq) for lv in ordered]
    bonus = _alloc_fair(bonus_flows, residual, now)
    for fid, extra in bonus.items():
        rates[fid] += extra
    return rates


_POLICIES = {
    "pdq": _alloc_pdq,
    "sjf": _alloc_sjf,
    "edf": _alloc_edf,
    "fair": _alloc_fair,
    "d3": _alloc_d3,
}


def allocator(policy: str):
    return _POLICIES[policy]


def fluid_schedule(flows: list[OracleFlow], capacities: dict[str, float],
                   policy: str) -> FluidSchedule:
    """Run a fluid simulation to completion of all flows."""
    alloc = _POLICIES[policy]
    sched = FluidSchedule()
    pending = sorted(flows, key=lambda f: (f.arrival, f.flow_id))
    live: list[_Live] = []
    seq = 0
    now = min((f.arrival for f in pending), default=0.0)
    guard = 0
    while pending or live:
        guard += 1
        if guard > 20 * len(flows) + 100:
            raise RuntimeError("fluid scheduler failed to make progress")
        while pending and pending[0].arrival <= now + _EPS:
            live.append(_Live(pending.pop(0), seq))
            seq += 1
        rates = alloc(live, capacities, now)
        horizon = pending[0].arrival if pending else INF
        for lv in live:
            rate = rates.get(lv.flow.flow_id, 0.0)
            if rate > _EPS:
                horizon = min(horizon, now + lv.remaining / rate)
            dl = lv.flow.deadline
            if dl is not None and dl > now + _EPS:
                horizon = min(horizon, dl)
        if horizon is INF:
            break  # nothing can progress (all rates zero, no arrivals)
        for lv in live:
            rate = rates.get(lv.flow.flow_id, 0.0)
            if rate > _EPS or horizon > now:
                sched.segments.setdefault(lv.flow.flow_id, []).append((now, horizon, rate))
            lv.remaining -= rate * (horizon - now)
        done = [lv for lv in live if lv.remaining <= _EPS * max(1.0, lv.flow.size)]
        for lv in done:
            sched.completion[lv.flow.flow_id] = horizon
            live.remove(lv)
        now = horizon
    return sched


def centralized_pdq_schedule(flows, capacities):
    return fluid_schedule(flows, capacities, "pdq")


def fluid_fair_sharing(flows, capacities):
    return fluid_schedule(flows, capacities, "fair")


def fluid_sjf(flows, capacities):
    return fluid_schedule(flows, capacities, "sjf")


def fluid_edf(flows, capacities):
    return fluid_schedule(flows, capacities, "edf")


def fluid_d3(flows, capacities, arrival_order: list[str] | None = None):
    """D3 fluid model; arrival_order permutes FCFS priority of same-time arrivals."""
    if arrival_order is None:
        return fluid_schedule(flows, capacities, "d3")
    jitter = {fid: i for i, fid in enumerate(arrival_order)}
    shifted = [OracleFlow(f.flow_id, f.size, f.path,
                          f.arrival + jitter.get(f.flow_id, 0) * 1e-12,
                          f.deadline, f.max_rate) for f in flows]
    return fluid_schedule(shifted, capacities, "d3")


def oracle_inputs(specs, topo, wire_factor: float = 1.0):
    """Map workload FlowSpecs and a Topology onto oracle flows and capacities.

    wire_factor > 1 inflates sizes to account for per-packet header overhead.
    """
    caps = {f"{a}->{b}": float(p.rate_bps) for (a, b), p in topo.link_params.items()}
    flows = []
    for s in specs:
        nodes = topo.ecmp_path(s.src, s.dst, s.flow_id)
        links = tuple(f"{nodes[i]}->{nodes[i + 1]}" for i in range(len(nodes) - 1))
        flows.append(OracleFlow(
            s.flow_id, s.size_bytes * 8 * wire_factor, links,
            arrival=float(s.start_ns),
            deadline=None if s.deadline_ns is None else float(s.deadline_ns),
            max_rate=topo.min_rate_on(nodes) / 1e9))
    # rates in bits/ns so that times stay in ns
    caps = {k: v / 1e9 for k, v in caps.items()}
    return flows, caps
