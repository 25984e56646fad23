"""Time and rate units.

Simulation time is integer nanoseconds so that event ordering, tie-breaking
and repeated runs are exact. Rates are integer bits per second, sizes are
integer bytes.
"""

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_SEC = 1_000_000_000

GBPS = 1_000_000_000
MBPS = 1_000_000

KB = 1_000
MB = 1_000_000


def us(x: float) -> int:
    return round(x * NS_PER_US)


def ms(x: float) -> int:
    return round(x * NS_PER_MS)


def seconds(ns: int) -> float:
    return ns / NS_PER_SEC


def tx_time_ns(size_bytes: int, rate_bps: int) -> int:
    """Time to serialize size_bytes onto a link of rate_bps, rounded to ns."""
    if rate_bps <= 0:
        raise ValueError("rate must be positive")
    bits = size_bytes * 8
    return (bits * NS_PER_SEC + rate_bps // 2) // rate_bps


def interval_bits(rate_bps: int, duration_ns: int) -> float:
    return rate_bps * duration_ns / NS_PER_SEC
