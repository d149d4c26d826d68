import struct
from collections import Counter

import numpy as np
import pytest

from flowinv.trace import (
    FiveTuple,
    PacketRecord,
    SyntheticTraceConfig,
    TraceFormatError,
    generate_trace,
    parse_packet_line,
    read_trace,
    write_trace,
)


def test_parse_golden_line():
    pkt = parse_packet_line("0.000000 6 10.0.0.1 80 10.0.0.2 1234 1500 S", 1)
    assert pkt.timestamp == 0.0
    assert pkt.key == FiveTuple(6, "10.0.0.1", 80, "10.0.0.2", 1234)
    assert pkt.byte_len == 1500
    assert pkt.tcp_flags == frozenset("S")


def test_parse_no_flags_marker():
    pkt = parse_packet_line("1.500000 17 10.0.0.1 53 10.0.0.2 999 60 -", 1)
    assert pkt.tcp_flags == frozenset()
    assert pkt.key.protocol == 17


@pytest.mark.parametrize(
    "line",
    [
        "0.0 6 10.0.0.1 80 10.0.0.2",  # too few fields
        "0.0 6 10.0.0.1 80 10.0.0.2 1234 xyz S",  # bad byte count
        "0.0 6 10.0.0.1 80 10.0.0.2 1234 1500 Q",  # unknown flag
        "0.0 17 10.0.0.1 80 10.0.0.2 1234 60 S",  # flags on non-TCP
    ],
)
def test_parse_errors_name_line_number(line):
    with pytest.raises(TraceFormatError, match="line 7"):
        parse_packet_line(line, 7)


def test_read_text_names_line_of_malformed_record(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text(
        "0.000000 6 10.0.0.1 80 10.0.0.2 1234 1500 S\n"
        "garbage\n"
    )
    with pytest.raises(TraceFormatError, match="line 2"):
        read_trace(path, format="text")


def test_empty_file_is_empty_stream(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("")
    data = read_trace(path, format="text")
    assert data.packets == [] and data.skipped == 0


def test_missing_file_is_fatal(tmp_path):
    with pytest.raises(OSError):
        read_trace(tmp_path / "nope.txt", format="text")


def test_write_read_identity(tmp_path):
    packets, _ = generate_trace(
        SyntheticTraceConfig(num_flows=50, max_flow_len=20, tcp_fraction=0.5, seed=4)
    )
    path = tmp_path / "trace.txt"
    write_trace(path, packets)
    back = read_trace(path, format="text")
    assert back.packets == packets


def test_read_rebases_timestamps(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text(
        "5.000000 6 10.0.0.1 80 10.0.0.2 1234 1500 S\n"
        "6.250000 6 10.0.0.1 80 10.0.0.2 1234 1500 -\n"
    )
    data = read_trace(path, format="text")
    assert [pkt.timestamp for pkt in data.packets] == [0.0, 1.25]


def test_packet_record_validation():
    key = FiveTuple(6, "1.2.3.4", 1, "5.6.7.8", 2)
    with pytest.raises(ValueError):
        PacketRecord(0.0, key, 0)  # zero-byte packet
    with pytest.raises(ValueError):
        PacketRecord(-1.0, key, 100)
    udp = FiveTuple(17, "1.2.3.4", 1, "5.6.7.8", 2)
    with pytest.raises(ValueError):
        PacketRecord(0.0, udp, 100, frozenset("S"))


# ---------------------------------------------------------------------------
# pcap subset


def _eth_ipv4(proto, src, dst, sport, dport, total_len, flags=0, ethertype=0x0800):
    eth = b"\xaa" * 6 + b"\xbb" * 6 + struct.pack("!H", ethertype)
    src_b = bytes(int(x) for x in src.split("."))
    dst_b = bytes(int(x) for x in dst.split("."))
    ip = struct.pack(
        "!BBHHHBBH4s4s", 0x45, 0, total_len, 0, 0, 64, proto, 0, src_b, dst_b
    )
    if proto == 6:
        l4 = struct.pack("!HHIIBB", sport, dport, 0, 0, 0x50, flags) + b"\x00" * 6
    elif proto == 17:
        l4 = struct.pack("!HHHH", sport, dport, 8, 0)
    else:
        l4 = b"\x08\x00\x00\x00"
    return eth + ip + l4


def _pcap_bytes(frames, endian="<", ts_step=0.5):
    out = struct.pack(endian + "IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
    t = 1000.0
    for data in frames:
        sec = int(t)
        usec = int(round((t - sec) * 1e6))
        out += struct.pack(endian + "IIII", sec, usec, len(data), len(data))
        out += data
        t += ts_step
    return out


@pytest.mark.parametrize("endian", ["<", ">"])
def test_pcap_reader_decodes_tcp_udp_icmp(tmp_path, endian):
    frames = [
        _eth_ipv4(6, "10.0.0.1", "10.0.0.2", 80, 1234, 1500, flags=0x02),
        _eth_ipv4(17, "10.0.0.3", "10.0.0.4", 53, 5353, 60),
        _eth_ipv4(1, "10.0.0.5", "10.0.0.6", 0, 0, 84),
    ]
    path = tmp_path / "t.pcap"
    path.write_bytes(_pcap_bytes(frames, endian))
    data = read_trace(path)  # auto-detected
    assert data.skipped == 0
    assert [p.key.protocol for p in data.packets] == [6, 17, 1]
    assert data.packets[0].tcp_flags == frozenset("S")
    assert data.packets[0].byte_len == 1500
    assert data.packets[1].key == FiveTuple(17, "10.0.0.3", 53, "10.0.0.4", 5353)
    assert data.packets[2].key.src_port == 0
    assert [p.timestamp for p in data.packets] == [0.0, 0.5, 1.0]


def test_pcap_reader_skips_undecodable(tmp_path):
    frames = [
        _eth_ipv4(6, "10.0.0.1", "10.0.0.2", 80, 1234, 1500, flags=0x02)
        for _ in range(9)
    ]
    frames.insert(4, _eth_ipv4(6, "10.0.0.9", "10.0.0.8", 1, 2, 100, ethertype=0x86DD))
    path = tmp_path / "t.pcap"
    path.write_bytes(_pcap_bytes(frames))
    data = read_trace(path)
    assert len(data.packets) == 9
    assert data.skipped == 1


def test_pcap_reader_skips_unknown_protocol_and_truncated(tmp_path):
    ok = _eth_ipv4(6, "10.0.0.1", "10.0.0.2", 80, 1234, 1500, flags=0x02)
    gre = _eth_ipv4(47, "10.0.0.1", "10.0.0.2", 0, 0, 100)
    truncated_tcp = ok[:40]  # capture cut inside the TCP header
    path = tmp_path / "t.pcap"
    path.write_bytes(_pcap_bytes([ok, gre, truncated_tcp]))
    data = read_trace(path)
    assert len(data.packets) == 1
    assert data.skipped == 2


def test_pcap_structural_corruption_is_fatal(tmp_path):
    good = _pcap_bytes([_eth_ipv4(6, "10.0.0.1", "10.0.0.2", 80, 1, 1500, flags=0x02)])
    path = tmp_path / "t.pcap"
    path.write_bytes(good[:-5])  # cut into the packet body
    with pytest.raises(TraceFormatError):
        read_trace(path)
    path.write_bytes(b"\x00\x01\x02\x03" + b"not a pcap padding.." * 2)
    with pytest.raises(TraceFormatError, match="magic"):
        read_trace(path, format="pcap")


# ---------------------------------------------------------------------------
# Synthetic traces


def test_generate_degenerate_single_flow():
    packets, truth = generate_trace(
        SyntheticTraceConfig(num_flows=1, min_flow_len=5, max_flow_len=5, seed=0)
    )
    assert len(packets) == 5
    assert len({p.key for p in packets}) == 1
    assert truth.max_len == 5 and truth.prob(5) == 1.0


def test_generate_is_deterministic():
    cfg = SyntheticTraceConfig(num_flows=200, max_flow_len=40, tcp_fraction=0.6, seed=42)
    first, truth_a = generate_trace(cfg)
    second, truth_b = generate_trace(cfg)
    assert first == second
    assert np.array_equal(truth_a.probs, truth_b.probs)


def test_ground_truth_matches_recount_by_five_tuple():
    packets, truth = generate_trace(
        SyntheticTraceConfig(num_flows=500, max_flow_len=100, tcp_fraction=0.5, seed=9)
    )
    recount = Counter()
    for pkt in packets:
        recount[pkt.key] += 1
    from flowinv.distributions import FlowLengthDistribution

    rebuilt = FlowLengthDistribution.from_lengths(recount.values())
    assert truth.max_len == rebuilt.max_len
    assert np.array_equal(truth.probs, rebuilt.probs)


def test_timestamps_non_decreasing_and_interleaved():
    packets, _ = generate_trace(
        SyntheticTraceConfig(num_flows=100, min_flow_len=3, max_flow_len=30, seed=2)
    )
    ts = [p.timestamp for p in packets]
    assert ts == sorted(ts)
    assert ts[0] == 0.0
    # packets of distinct flows intermix: some flow change between neighbours
    changes = sum(a.key != b.key for a, b in zip(packets, packets[1:]))
    assert changes > len(packets) // 2


def test_every_tcp_flow_opens_with_syn_and_extra_syn_rate():
    cfg = SyntheticTraceConfig(
        num_flows=4000,
        min_flow_len=2,
        max_flow_len=30,
        tcp_fraction=1.0,
        extra_syn_prob=0.3,
        seed=21,
    )
    packets, _ = generate_trace(cfg)
    syns = Counter()
    for pkt in packets:
        if "S" in pkt.tcp_flags:
            syns[pkt.key] += 1
    assert len(syns) == 4000  # every TCP flow has at least one SYN
    frac = sum(1 for n in syns.values() if n >= 2) / 4000
    sigma = (0.3 * 0.7 / 4000) ** 0.5
    assert abs(frac - 0.3) <= 3 * sigma


def test_extra_syn_max_len_restricts_to_short_flows():
    cfg = SyntheticTraceConfig(
        num_flows=2000,
        min_flow_len=2,
        max_flow_len=40,
        tcp_fraction=1.0,
        extra_syn_prob=1.0,
        extra_syn_max_len=3,
        seed=5,
    )
    packets, _ = generate_trace(cfg)
    syns = Counter()
    lengths = Counter()
    for pkt in packets:
        lengths[pkt.key] += 1
        if "S" in pkt.tcp_flags:
            syns[pkt.key] += 1
    for key, n in lengths.items():
        assert syns[key] == (2 if n <= 3 else 1)


def test_heavy_tail_ccdf_slope():
    _, truth = generate_trace(
        SyntheticTraceConfig(
            num_flows=100_000, alpha=1.5, min_flow_len=1, max_flow_len=10_000,
            mean_interarrival=0.01, seed=3,
        )
    )
    from flowinv.binning import ccdf, make_bins, ratio_for_bins_per_decade

    tail = dict(ccdf(truth))
    xs = [
        b
        for b in make_bins(truth.max_len, ratio_for_bins_per_decade(10))
        if 3 <= b <= 300 and tail.get(b, 0) > 0
    ]
    slope = np.polyfit(np.log10(xs), np.log10([tail[x] for x in xs]), 1)[0]
    assert -1.7 <= slope <= -1.3


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_flows=0),
        dict(num_flows=1, alpha=2.0),
        dict(num_flows=1, alpha=0.0),
        dict(num_flows=1, min_flow_len=5, max_flow_len=4),
        dict(num_flows=1, mean_interarrival=0.0),
        dict(num_flows=1, tcp_fraction=1.5),
        dict(num_flows=1, byte_len_model=0),
        dict(num_flows=1, byte_len_model=(100, 70000)),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SyntheticTraceConfig(**kwargs)
