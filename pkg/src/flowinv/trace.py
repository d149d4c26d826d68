"""Packet traces: domain types, text and pcap readers, synthetic generation.

The text trace format is one packet per line::

    timestamp proto src sport dst dport bytes flags

with the timestamp printed to six decimal places, dotted-quad addresses and
``flags`` a subset of ``SFR`` (``-`` when empty).  The pcap reader handles
classic pcap files (microsecond magic, either byte order) carrying
Ethernet + IPv4 + TCP/UDP/ICMP; anything else is counted and skipped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .distributions import FlowLengthDistribution

TCP = 6
UDP = 17
ICMP = 1

_FLAG_ORDER = "SFR"
_FLAG_SET = frozenset(_FLAG_ORDER)
_NO_FLAGS = frozenset()
_SYN_ONLY = frozenset("S")

_PCAP_MAGIC_US = 0xA1B2C3D4
_ETHERTYPE_IPV4 = 0x0800
_FOREVER = float("inf")


class TraceFormatError(ValueError):
    """A trace file cannot be parsed under its declared format."""


@dataclass(frozen=True, slots=True)
class FiveTuple:
    """Flow key: protocol plus source/destination address and port."""

    protocol: int
    src_addr: str
    src_port: int
    dst_addr: str
    dst_port: int

    def __post_init__(self):
        if not 0 <= self.protocol <= 255:
            raise ValueError(f"bad protocol number {self.protocol}")
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"bad port {port}")


@dataclass(slots=True)
class PacketRecord:
    """One packet: capture time, flow key, IP byte length, TCP flags seen."""

    timestamp: float
    key: FiveTuple
    byte_len: int
    tcp_flags: frozenset = _NO_FLAGS

    def __post_init__(self):
        if not 0.0 <= self.timestamp < _FOREVER:
            raise ValueError(f"bad timestamp {self.timestamp}")
        if not 1 <= self.byte_len <= 65535:
            raise ValueError(f"byte_len {self.byte_len} outside [1, 65535]")
        if self.tcp_flags:
            if not self.tcp_flags <= _FLAG_SET:
                raise ValueError(f"unknown TCP flags {set(self.tcp_flags)}")
            if self.key.protocol != TCP:
                raise ValueError("TCP flags on a non-TCP packet")


@dataclass
class Trace:
    """A fully read trace plus the count of undecodable packets skipped."""

    packets: list
    skipped: int = 0

    def __iter__(self) -> Iterator[PacketRecord]:
        return iter(self.packets)

    def __len__(self) -> int:
        return len(self.packets)


# ---------------------------------------------------------------------------
# Text format


def format_packet(pkt: PacketRecord) -> str:
    flags = "".join(c for c in _FLAG_ORDER if c in pkt.tcp_flags) or "-"
    k = pkt.key
    return (
        f"{pkt.timestamp:.6f} {k.protocol} {k.src_addr} {k.src_port} "
        f"{k.dst_addr} {k.dst_port} {pkt.byte_len} {flags}"
    )


def parse_packet_line(line: str, lineno: int) -> PacketRecord:
    parts = line.split()
    if len(parts) != 8:
        raise TraceFormatError(
            f"line {lineno}: expected 8 fields, got {len(parts)}"
        )
    try:
        ts = float(parts[0])
        proto = int(parts[1])
        sport = int(parts[3])
        dport = int(parts[5])
        nbytes = int(parts[6])
        flags = _NO_FLAGS if parts[7] == "-" else frozenset(parts[7])
        key = FiveTuple(proto, parts[2], sport, parts[4], dport)
        return PacketRecord(ts, key, nbytes, flags)
    except ValueError as exc:
        raise TraceFormatError(f"line {lineno}: {exc}") from exc


def write_trace(path, packets: Iterable[PacketRecord]) -> None:
    with open(path, "w", newline="\n") as fh:
        for pkt in packets:
            fh.write(format_packet(pkt))
            fh.write("\n")


def _read_text(path) -> Trace:
    packets = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            packets.append(parse_packet_line(line, lineno))
    _rebase(packets)
    return Trace(packets, skipped=0)


def _rebase(packets: list) -> None:
    if packets and packets[0].timestamp != 0.0:
        t0 = packets[0].timestamp
        for pkt in packets:
            pkt.timestamp -= t0


# ---------------------------------------------------------------------------
# pcap subset


def _decode_ethernet_ipv4(data: bytes):
    """Decode Ethernet + IPv4 + TCP/UDP/ICMP; return fields or None to skip."""
    if len(data) < 34:  # 14 ethernet + 20 minimal IP
        return None
    if struct.unpack_from("!H", data, 12)[0] != _ETHERTYPE_IPV4:
        return None
    ip_off = 14
    ver_ihl = data[ip_off]
    if ver_ihl >> 4 != 4:
        return None
    ihl = (ver_ihl & 0x0F) * 4
    if ihl < 20 or len(data) < ip_off + ihl:
        return None
    total_len, = struct.unpack_from("!H", data, ip_off + 2)
    frag, = struct.unpack_from("!H", data, ip_off + 6)
    if frag & 0x1FFF:  # non-first fragment: no transport header to read
        return None
    proto = data[ip_off + 9]
    src = ".".join(str(b) for b in data[ip_off + 12 : ip_off + 16])
    dst = ".".join(str(b) for b in data[ip_off + 16 : ip_off + 20])
    l4 = ip_off + ihl
    flags = _NO_FLAGS
    if proto == TCP:
        if len(data) < l4 + 14:
            return None
        sport, dport = struct.unpack_from("!HH", data, l4)
        bits = data[l4 + 13]
        got = [c for c, mask in (("F", 0x01), ("S", 0x02), ("R", 0x04)) if bits & mask]
        flags = frozenset(got) if got else _NO_FLAGS
    elif proto == UDP:
        if len(data) < l4 + 4:
            return None
        sport, dport = struct.unpack_from("!HH", data, l4)
    elif proto == ICMP:
        sport = dport = 0
    else:
        return None
    if not 1 <= total_len <= 65535:
        return None
    return FiveTuple(proto, src, sport, dst, dport), total_len, flags


def _read_pcap(path) -> Trace:
    with open(path, "rb") as fh:
        header = fh.read(24)
        if len(header) < 24:
            raise TraceFormatError(f"{path}: truncated pcap global header")
        magic, = struct.unpack_from("<I", header)
        if magic == _PCAP_MAGIC_US:
            endian = "<"
        elif struct.unpack_from(">I", header)[0] == _PCAP_MAGIC_US:
            endian = ">"
        else:
            raise TraceFormatError(f"{path}: not a pcap file (magic {magic:#x})")
        network, = struct.unpack_from(endian + "I", header, 20)
        if network != 1:
            raise TraceFormatError(f"{path}: unsupported link type {network}")
        packets = []
        skipped = 0
        while True:
            pkthdr = fh.read(16)
            if not pkthdr:
                break
            if len(pkthdr) < 16:
                raise TraceFormatError(f"{path}: truncated packet header at EOF")
            ts_sec, ts_usec, caplen, _orig = struct.unpack(endian + "IIII", pkthdr)
            data = fh.read(caplen)
            if len(data) < caplen:
                raise TraceFormatError(f"{path}: truncated packet body at EOF")
            decoded = _decode_ethernet_ipv4(data)
            if decoded is None:
                skipped += 1
                continue
            key, total_len, flags = decoded
            packets.append(PacketRecord(ts_sec + ts_usec * 1e-6, key, total_len, flags))
    _rebase(packets)
    return Trace(packets, skipped)


def read_trace(path, format: str = "auto") -> Trace:
    """Read a trace file; timestamps are rebased so the first packet is at 0.

    ``format`` is ``text``, ``pcap`` or ``auto`` (sniff the pcap magic).
    Text parsing errors are fatal and name the offending line; pcap packets
    that cannot be decoded are counted in ``Trace.skipped``.
    """
    if format == "auto":
        with open(path, "rb") as fh:
            head = fh.read(4)
        magic = struct.unpack("<I", head)[0] if len(head) == 4 else 0
        swapped = struct.unpack(">I", head)[0] if len(head) == 4 else 0
        format = "pcap" if _PCAP_MAGIC_US in (magic, swapped) else "text"
    if format in ("pcap", "pcap-subset"):
        return _read_pcap(path)
    if format == "text":
        return _read_text(path)
    raise ValueError(f"unknown trace format {format!r}")


# ---------------------------------------------------------------------------
# Synthetic traces


@dataclass(frozen=True)
class SyntheticTraceConfig:
    """Parameters for a synthetic trace with a known flow-length distribution.

    Flow lengths are drawn from a discrete Pareto with tail exponent
    ``alpha`` (P(L = k) proportional to k**-(alpha+1)) truncated to
    [min_flow_len, max_flow_len].  Flow start times and intra-flow packet
    gaps are both exponential with mean ``mean_interarrival`` so packets of
    concurrent flows interleave.  ``byte_len_model`` is either a fixed
    integer or a ``(lo, hi)`` inclusive uniform range.  TCP flows open with
    one SYN packet; with probability ``extra_syn_prob`` a flow of length
    >= 2 carries a second SYN on its second packet (restricted to flows no
    longer than ``extra_syn_max_len`` when that is set).
    """

    num_flows: int
    alpha: float = 1.5
    min_flow_len: int = 1
    max_flow_len: int = 10_000
    mean_interarrival: float = 1.0
    tcp_fraction: float = 1.0
    extra_syn_prob: float = 0.0
    byte_len_model: int | tuple[int, int] = 1500
    seed: int = 0
    extra_syn_max_len: int | None = None

    def __post_init__(self):
        if self.num_flows < 1:
            raise ValueError("num_flows must be >= 1")
        if self.num_flows > 1 << 24:
            raise ValueError("num_flows exceeds the enumerable address space")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must be in (0, 2), got {self.alpha}")
        if not 1 <= self.min_flow_len <= self.max_flow_len:
            raise ValueError("need 1 <= min_flow_len <= max_flow_len")
        if self.mean_interarrival <= 0:
            raise ValueError("mean_interarrival must be positive")
        if not 0.0 <= self.tcp_fraction <= 1.0:
            raise ValueError("tcp_fraction must be in [0, 1]")
        if not 0.0 <= self.extra_syn_prob <= 1.0:
            raise ValueError("extra_syn_prob must be in [0, 1]")
        lo, hi = self._byte_range()
        if not 1 <= lo <= hi <= 65535:
            raise ValueError(f"byte_len_model {self.byte_len_model} outside [1, 65535]")

    def _byte_range(self) -> tuple[int, int]:
        if isinstance(self.byte_len_model, tuple):
            return self.byte_len_model
        return self.byte_len_model, self.byte_len_model


def _truncated_pareto_lengths(rng, alpha, lo, hi, n) -> np.ndarray:
    support = np.arange(lo, hi + 1, dtype=float)
    weights = support ** (-(alpha + 1.0))
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return lo + np.searchsorted(cdf, rng.random(n), side="right")


def _flow_key(index: int, proto: int) -> FiveTuple:
    src = f"10.{(index >> 16) & 0xFF}.{(index >> 8) & 0xFF}.{index & 0xFF}"
    if proto == TCP:
        return FiveTuple(TCP, src, 1024 + (index % 50000), "192.168.0.1", 80)
    return FiveTuple(UDP, src, 1024 + (index % 50000), "192.168.0.1", 53)


def generate_trace(config: SyntheticTraceConfig):
    """Generate a packet stream with a known flow-length ground truth.

    Returns ``(packets, truth)`` where ``truth`` is the exact empirical
    distribution of the generated per-flow packet counts.  Deterministic for
    a fixed seed; timestamps are on the microsecond grid with the first
    packet at time 0.
    """
    rng = np.random.default_rng(config.seed & ((1 << 64) - 1))
    n = config.num_flows
    lengths = _truncated_pareto_lengths(
        rng, config.alpha, config.min_flow_len, config.max_flow_len, n
    )
    is_tcp = rng.random(n) < config.tcp_fraction
    extra_syn = (rng.random(n) < config.extra_syn_prob) & is_tcp & (lengths >= 2)
    if config.extra_syn_max_len is not None:
        extra_syn &= lengths <= config.extra_syn_max_len

    starts = np.cumsum(rng.exponential(config.mean_interarrival, n))
    total = int(lengths.sum())
    gaps = rng.exponential(config.mean_interarrival, total)
    first_idx = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    gaps[first_idx] = 0.0
    within = np.cumsum(gaps)
    within -= np.repeat(within[first_idx], lengths)
    ts = np.repeat(starts, lengths) + within
    ts = np.round(ts - ts[0], 6)

    lo, hi = config._byte_range()
    if lo == hi:
        byte_lens = np.full(total, lo, dtype=np.int64)
    else:
        byte_lens = rng.integers(lo, hi + 1, total)

    flow_of = np.repeat(np.arange(n), lengths)
    position = np.arange(total) - np.repeat(first_idx, lengths)
    order = np.argsort(ts, kind="stable")

    keys = [_flow_key(i, TCP if is_tcp[i] else UDP) for i in range(n)]
    packets = []
    append = packets.append
    for j in order:
        f = flow_of[j]
        pos = position[j]
        syn = is_tcp[f] and (pos == 0 or (pos == 1 and extra_syn[f]))
        append(
            PacketRecord(
                float(ts[j]),
                keys[f],
                int(byte_lens[j]),
                _SYN_ONLY if syn else _NO_FLAGS,
            )
        )
    truth = FlowLengthDistribution.from_lengths(lengths)
    return packets, truth
