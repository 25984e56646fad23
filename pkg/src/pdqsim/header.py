"""Per-packet scheduling header and overhead accounting.

Every DATA/PROBE/SYN packet carries explicit scheduling feedback on the
forward path (rate, pausing switch, deadline, expected transmission time);
the receiver echoes it back in the ACK, where the probe-interval and
measured-RTT fields are meaningful instead. In simulation all six fields are
carried logically; the 16-byte wire footprint is used only for overhead
accounting and by the optional bit-exact codec.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .units import NS_PER_SEC, NS_PER_US

# Wire-size accounting: 40-byte base transport/IP header plus the 16-byte
# scheduling header on every packet that carries one.
BASE_HEADER_BYTES = 40
SCHED_HEADER_BYTES = 16
CONTROL_PACKET_BYTES = BASE_HEADER_BYTES + SCHED_HEADER_BYTES
DATA_OVERHEAD_BYTES = BASE_HEADER_BYTES + SCHED_HEADER_BYTES


@dataclass
class SchedulingHeader:
    """Scheduling feedback carried by one packet.

    rate_bps: granted/advertised sending rate (sender writes its maximal
        rate; switches only lower it).
    paused_by: id of the switch that paused the flow, or None.
    deadline_ns: absolute flow deadline, or None for deadline-free flows.
    expected_tx_ns: remaining flow size divided by the flow's maximal rate.
    probe_interval_rtts: probing period for a paused sender, in RTTs.
    rtt_ns: sender's current RTT estimate.
    """

    rate_bps: int
    paused_by: str | None = None
    deadline_ns: int | None = None
    expected_tx_ns: int = 0
    probe_interval_rtts: float = 1.0
    rtt_ns: int = 0

    def copy(self) -> "SchedulingHeader":
        return SchedulingHeader(
            rate_bps=self.rate_bps,
            paused_by=self.paused_by,
            deadline_ns=self.deadline_ns,
            expected_tx_ns=self.expected_tx_ns,
            probe_interval_rtts=self.probe_interval_rtts,
            rtt_ns=self.rtt_ns,
        )


def probe_bandwidth_fraction(probe_bytes: int, interval_ns: int, rate_bps: int) -> float:
    """Fraction of link bandwidth consumed by one probe every interval_ns."""
    return (probe_bytes * 8 / (interval_ns / NS_PER_SEC)) / rate_bps


# --- optional bit-exact codec -------------------------------------------------
#
# Four fields x four bytes. The pause field hashes the switch id into 32 bits;
# deadline/expected-tx share their slots with probe-interval/rtt because the
# former pair is used only on the forward path and the latter only on the
# reverse path. Quantization: rate in kbps, times in us, probe interval in
# 1/1000 RTT.

_NONE_SWITCH = 0
_NO_DEADLINE = 0xFFFFFFFF


def switch_id_hash(switch_id: str) -> int:
    return (zlib.crc32(switch_id.encode()) & 0xFFFFFFFF) or 1


def encode_header(h: SchedulingHeader, forward: bool) -> bytes:
    rate_kbps = min(h.rate_bps // 1000, 0xFFFFFFFF)
    pause = switch_id_hash(h.paused_by) if h.paused_by is not None else _NONE_SWITCH
    if forward:
        third = _NO_DEADLINE if h.deadline_ns is None else min(h.deadline_ns // NS_PER_US, 0xFFFFFFFE)
        fourth = min(h.expected_tx_ns // NS_PER_US, 0xFFFFFFFF)
    else:
        third = min(int(h.probe_interval_rtts * 1000), 0xFFFFFFFF)
        fourth = min(h.rtt_ns // NS_PER_US, 0xFFFFFFFF)
    return struct.pack(">IIII", rate_kbps, pause, third, fourth)


def decode_header(blob: bytes, forward: bool, switch_ids: list[str] | None = None) -> SchedulingHeader:
    rate_kbps, pause, third, fourth = struct.unpack(">IIII", blob)
    paused_by = None
    if pause != _NONE_SWITCH and switch_ids:
        for sid in switch_ids:
            if switch_id_hash(sid) == pause:
                paused_by = sid
                break
    h = SchedulingHeader(rate_bps=rate_kbps * 1000, paused_by=paused_by)
    if forward:
        h.deadline_ns = None if third == _NO_DEADLINE else third * NS_PER_US
        h.expected_tx_ns = fourth * NS_PER_US
    else:
        h.probe_interval_rtts = third / 1000
        h.rtt_ns = fourth * NS_PER_US
    return h
