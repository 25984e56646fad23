"""Synthetic traffic generators.

Deadline-constrained flows draw sizes uniformly from [2 KB, 198 KB] and
deadlines from an exponential with mean 20 ms, clamped below at 3 ms.
Deadline-free flows draw sizes uniformly from an interval whose mean is
configurable (100/1000 KB). Patterns: aggregation, stride(i), staggered
prob(p) and random permutation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .topology import Topology
from .units import KB, MB, ms

DEADLINE_SIZE_MIN = 2 * KB
DEADLINE_SIZE_MAX = 198 * KB
DEADLINE_MEAN_NS = ms(20)
DEADLINE_FLOOR_NS = ms(3)


@dataclass
class FlowSpec:
    flow_id: str
    src: str
    dst: str
    size_bytes: int
    start_ns: int = 0
    deadline_ns: int | None = None  # absolute
    criticality_mode: str = "exact"

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError(f"{self.flow_id}: size must be positive")
        if self.deadline_ns is not None and self.deadline_ns <= self.start_ns:
            raise ValueError(f"{self.flow_id}: deadline must be after start")


def draw_deadline_size(rng: random.Random) -> int:
    return rng.randint(DEADLINE_SIZE_MIN, DEADLINE_SIZE_MAX)


def draw_deadline_ns(rng: random.Random, mean_ns: int = DEADLINE_MEAN_NS,
                     floor_ns: int = DEADLINE_FLOOR_NS) -> int:
    return max(floor_ns, round(rng.expovariate(1.0 / mean_ns)))


def draw_free_size(rng: random.Random, mean_bytes: int) -> int:
    # Interval [2 KB, 2*mean - 2 KB] keeps the mean exact, mirroring the
    # deadline-constrained [2, 198] KB interval for a 100 KB mean.
    lo = DEADLINE_SIZE_MIN
    hi = 2 * mean_bytes - lo
    if hi <= lo:
        raise ValueError("mean size too small")
    return rng.randint(lo, hi)


def _make_flow(i: int, src: str, dst: str, rng: random.Random, deadline: bool,
               mean_size: int, start_ns: int, mode: str) -> FlowSpec:
    if deadline:
        size = draw_deadline_size(rng)
        dl = start_ns + draw_deadline_ns(rng)
    else:
        size = draw_free_size(rng, mean_size)
        dl = None
    return FlowSpec(f"f{i:03d}", src, dst, size, start_ns, dl, mode)


def gen_aggregation(topo: Topology, n_flows: int, rng: random.Random,
                    deadline: bool = True, mean_size: int = 100 * KB,
                    start_ns: int = 0, receiver: str | None = None,
                    mode: str = "exact") -> list[FlowSpec]:
    """f flows into one aggregator; senders get floor(f/n) or ceil(f/n) flows."""
    receiver = receiver or topo.hosts[0]
    senders = [h for h in topo.hosts if h != receiver]
    n = len(senders)
    base, extra = divmod(n_flows, n)
    lucky = rng.sample(range(n), extra)
    assignment = []
    for idx, sender in enumerate(senders):
        assignment.extend([sender] * (base + (1 if idx in lucky else 0)))
    rng.shuffle(assignment)
    return [_make_flow(i, assignment[i], receiver, rng, deadline, mean_size,
                       start_ns, mode) for i in range(n_flows)]


def gen_stride(topo: Topology, stride: int, rng: random.Random,
               deadline: bool = True, mean_size: int = 100 * KB,
               start_ns: int = 0, mode: str = "exact") -> list[FlowSpec]:
    hosts = topo.hosts
    n = len(hosts)
    return [_make_flow(i, hosts[i], hosts[(i + stride) % n], rng, deadline,
                       mean_size, start_ns, mode) for i in range(n)]


def gen_staggered(topo: Topology, prob_local: float, rng: random.Random,
                  deadline: bool = True, mean_size: int = 100 * KB,
                  start_ns: int = 0, mode: str = "exact") -> list[FlowSpec]:
    """Each host sends under its own rack with probability p, else anywhere."""
    if not 0 <= prob_local <= 1:
        raise ValueError("probability must be in [0, 1]")
    flows = []
    for i, src in enumerate(topo.hosts):
        local = [h for h in topo.hosts if h != src and topo.rack.get(h) == topo.rack.get(src)]
        remote = [h for h in topo.hosts if h != src and topo.rack.get(h) != topo.rack.get(src)]
        pool = local if (local and rng.random() < prob_local) else (remote or local)
        dst = rng.choice(pool)
        flows.append(_make_flow(i, src, dst, rng, deadline, mean_size, start_ns, mode))
    return flows


def gen_permutation(topo: Topology, rng: random.Random, deadline: bool = True,
                    mean_size: int = 100 * KB, start_ns: int = 0,
                    mode: str = "exact") -> list[FlowSpec]:
    """Random 1-to-1 mapping with no host sending to itself."""
    hosts = list(topo.hosts)
    targets = list(hosts)
    rng.shuffle(targets)
    for i in range(len(hosts)):  # repair fixed points deterministically
        if targets[i] == hosts[i]:
            j = (i + 1) % len(hosts)
            targets[i], targets[j] = targets[j], targets[i]
    return [_make_flow(i, hosts[i], targets[i], rng, deadline, mean_size,
                       start_ns, mode) for i in range(len(hosts))]


def scenario1_workload(n_flows: int = 5, base_size: int = MB) -> list[FlowSpec]:
    """Concurrent ~1 MB flows, sizes perturbed so a smaller index is more critical."""
    flows = []
    for i in range(n_flows):
        size = base_size - (n_flows - 1 - i) * KB
        flows.append(FlowSpec(f"f{i:03d}", f"h{i:03d}", "recv", size, 0))
    return flows


def scenario2_workload(rng: random.Random, long_size: int = 10 * MB,
                       n_short: int = 50, short_size: int = 20 * KB,
                       burst_ns: int = ms(10)) -> list[FlowSpec]:
    """One long-lived flow plus a burst of perturbed 20 KB flows."""
    flows = [FlowSpec("long", f"h{0:03d}", "recv", long_size, 0)]
    for i in range(n_short):
        size = round(short_size * (1 + rng.uniform(-0.01, 0.01)))
        flows.append(FlowSpec(f"s{i:03d}", f"h{i + 1:03d}", "recv", size, burst_ns))
    return flows


GENERATORS = {
    "aggregation": gen_aggregation,
    "stride": gen_stride,
    "staggered": gen_staggered,
    "permutation": gen_permutation,
}
