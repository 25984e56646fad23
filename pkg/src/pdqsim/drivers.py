"""Driver classification and the convergence-bound inputs.

Two flows compete when they share at least one link. A flow is a driver
when it is more critical than every competitor, or when all of its
more-critical competitors are themselves non-drivers. At equilibrium
exactly the drivers send. P_max is the largest number of precedential
(more-critical, competing) flows any flow has.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .criticality import criticality_key
from .fluid import OracleFlow, _max_send_rate


@dataclass
class DriverAnalysis:
    drivers: set[str] = field(default_factory=set)
    precedential_counts: dict[str, int] = field(default_factory=dict)
    p_max: int = 0


def driver_analysis(flows: list[OracleFlow], capacities: dict[str, float]) -> DriverAnalysis:
    """Fixed-point driver classification in descending criticality order."""
    keys = {}
    for f in flows:
        expected_tx = f.size / _max_send_rate(f, capacities)
        keys[f.flow_id] = criticality_key(f.deadline, expected_tx, f.flow_id)
    links = {f.flow_id: set(f.path) for f in flows}
    result = DriverAnalysis()
    is_driver: dict[str, bool] = {}
    for f in sorted(flows, key=lambda f: keys[f.flow_id]):
        competitors = [g for g in flows if g.flow_id != f.flow_id
                       and links[f.flow_id] & links[g.flow_id]]
        precedential = [g for g in competitors if keys[g.flow_id] < keys[f.flow_id]]
        result.precedential_counts[f.flow_id] = len(precedential)
        is_driver[f.flow_id] = all(not is_driver[g.flow_id] for g in precedential)
        if is_driver[f.flow_id]:
            result.drivers.add(f.flow_id)
    result.p_max = max(result.precedential_counts.values(), default=0)
    return result
