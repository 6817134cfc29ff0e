"""Classic pcap reading/writing and Ethernet/IP/TCP/UDP decoding."""

from __future__ import annotations

import ipaddress
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional, Union

log = logging.getLogger(__name__)

PCAP_MAGIC = 0xA1B2C3D4
PCAP_MAGIC_SWAPPED = 0xD4C3B2A1
PCAP_MAGIC_NSEC = 0xA1B23C4D
PCAP_MAGIC_NSEC_SWAPPED = 0x4D3CB2A1
LINKTYPE_ETHERNET = 1

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

ETH_IPV4 = 0x0800
ETH_IPV6 = 0x86DD
ETH_VLAN = 0x8100

IPPROTO_TCP = 6
IPPROTO_UDP = 17

# IPv6 extension headers that are walked to reach the transport header.
_IPV6_EXT_HEADERS = {0, 43, 60}
_IPV6_FRAGMENT = 44

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10
TCP_URG = 0x20

_FLAG_NAMES = {
    TCP_FIN: "FIN",
    TCP_SYN: "SYN",
    TCP_RST: "RST",
    TCP_PSH: "PSH",
    TCP_ACK: "ACK",
    TCP_URG: "URG",
}

IPAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]


class PcapError(Exception):
    """Base class for capture-file problems."""


class UnsupportedFormat(PcapError):
    pass


class UnsupportedLinkType(PcapError):
    pass


class MalformedPacket(ValueError):
    """Raised by decode_packet when header lengths do not fit the captured bytes."""


class NotIPPacket(ValueError):
    pass


@dataclass(frozen=True)
class RawPacket:
    ts_sec: int
    ts_frac: int
    captured_len: int
    original_len: int
    data: bytes

    def __post_init__(self) -> None:
        if self.captured_len != len(self.data):
            raise ValueError("captured_len must equal len(data)")
        if self.captured_len > self.original_len:
            raise ValueError("captured_len exceeds original_len")

    @classmethod
    def from_bytes(cls, data: bytes, ts_sec: int = 0, ts_frac: int = 0) -> "RawPacket":
        return cls(ts_sec, ts_frac, len(data), len(data), bytes(data))

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_frac / 1_000_000


@dataclass(frozen=True)
class ParsedPacket:
    """A decoded frame. ``payload`` is the transport payload only."""

    ts_sec: int
    ts_usec: int
    ether_type: int
    src_ip: Optional[IPAddress] = None
    dst_ip: Optional[IPAddress] = None
    ip_ttl: int = 0
    ip_protocol: int = 0
    src_port: Optional[int] = None
    dst_port: Optional[int] = None
    tcp_seq: Optional[int] = None
    tcp_flags: frozenset = field(default_factory=frozenset)
    traffic_mode: str = "unicast"
    payload: bytes = b""
    link_type: str = "Ethernet"
    src_mac: str = ""
    dst_mac: str = ""

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_usec / 1_000_000

    @property
    def is_ip(self) -> bool:
        return self.src_ip is not None

    @property
    def has_ports(self) -> bool:
        return self.src_port is not None


# --------------------------------------------------------------------------
# pcap files


def _open_header(fh: BinaryIO) -> str:
    header = fh.read(GLOBAL_HEADER_LEN)
    if len(header) < GLOBAL_HEADER_LEN:
        raise UnsupportedFormat("file shorter than pcap global header")
    magic_le = struct.unpack("<I", header[:4])[0]
    if magic_le == PCAP_MAGIC:
        endian = "<"
    elif magic_le == PCAP_MAGIC_SWAPPED:
        endian = ">"
    elif magic_le in (PCAP_MAGIC_NSEC, PCAP_MAGIC_NSEC_SWAPPED):
        raise UnsupportedFormat("nanosecond-resolution pcap is not supported")
    else:
        raise UnsupportedFormat(f"bad pcap magic 0x{magic_le:08x}")
    network = struct.unpack(endian + "I", header[20:24])[0]
    if network != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"link type {network} (only Ethernet=1 is supported)")
    return endian


def iter_pcap(fh: BinaryIO) -> Iterator[RawPacket]:
    endian = _open_header(fh)
    rec = struct.Struct(endian + "IIII")
    while True:
        hdr = fh.read(RECORD_HEADER_LEN)
        if not hdr:
            return
        if len(hdr) < RECORD_HEADER_LEN:
            log.warning("truncated-capture: partial record header dropped")
            return
        ts_sec, ts_usec, incl_len, orig_len = rec.unpack(hdr)
        data = fh.read(incl_len)
        if len(data) < incl_len:
            log.warning("truncated-capture: record claims %d bytes, %d available", incl_len, len(data))
            return
        yield RawPacket(ts_sec, ts_usec, incl_len, max(orig_len, incl_len), data)


def read_pcap(path: Union[str, Path]) -> Iterator[RawPacket]:
    """Yield the records of a classic pcap file in file order.

    A trailing record that runs past end of file is dropped with a warning.
    """
    with open(path, "rb") as fh:
        yield from iter_pcap(fh)


def pcap_bytes(packets: Iterable[RawPacket], endian: str = "<", snaplen: int = 65535) -> bytes:
    """Serialize packets as a pcap image. ``endian='>'`` yields the byte-swapped variant
    when read on a little-endian host (the magic is always written in the chosen order)."""
    out = bytearray(struct.pack(endian + "IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET))
    rec = struct.Struct(endian + "IIII")
    for p in packets:
        out += rec.pack(p.ts_sec, p.ts_frac, p.captured_len, p.original_len)
        out += p.data
    return bytes(out)


def write_pcap(path: Union[str, Path], packets: Iterable[RawPacket], endian: str = "<") -> None:
    Path(path).write_bytes(pcap_bytes(packets, endian=endian))


# --------------------------------------------------------------------------
# decoding


def traffic_mode_of(dst: IPAddress) -> str:
    if dst.is_multicast:
        return "multicast"
    if isinstance(dst, ipaddress.IPv4Address) and dst == ipaddress.IPv4Address("255.255.255.255"):
        return "broadcast"
    return "unicast"


def _mac(b: bytes) -> str:
    return ":".join(f"{x:02x}" for x in b)


def decode_packet(raw: RawPacket) -> ParsedPacket:
    """Decode Ethernet -> IPv4/IPv6 -> TCP/UDP.

    Non-IP frames and IP packets carrying other protocols come back with an
    empty payload and no ports. Raises MalformedPacket when a header does not
    fit in the captured bytes, and for non-first IPv4 fragments.
    """
    data = raw.data
    if len(data) < 14:
        raise MalformedPacket("frame shorter than Ethernet header")
    dst_mac, src_mac = _mac(data[0:6]), _mac(data[6:12])
    ether_type = struct.unpack_from("!H", data, 12)[0]
    off = 14
    while ether_type == ETH_VLAN:
        if len(data) < off + 4:
            raise MalformedPacket("truncated VLAN tag")
        ether_type = struct.unpack_from("!H", data, off + 2)[0]
        off += 4

    base = dict(ts_sec=raw.ts_sec, ts_usec=raw.ts_frac, ether_type=ether_type, src_mac=src_mac, dst_mac=dst_mac)

    if ether_type == ETH_IPV4:
        if len(data) < off + 20:
            raise MalformedPacket("truncated IPv4 header")
        vihl = data[off]
        if vihl >> 4 != 4:
            raise MalformedPacket("IPv4 version field mismatch")
        ihl = (vihl & 0x0F) * 4
        total_len = struct.unpack_from("!H", data, off + 2)[0]
        if ihl < 20 or total_len < ihl or len(data) < off + ihl:
            raise MalformedPacket("inconsistent IPv4 header length")
        if off + total_len > raw.original_len:
            raise MalformedPacket("IPv4 total length exceeds the frame length")
        frag = struct.unpack_from("!H", data, off + 6)[0]
        if frag & 0x1FFF:
            raise MalformedPacket("non-first IPv4 fragment")
        ttl = data[off + 8]
        proto = data[off + 9]
        src = ipaddress.IPv4Address(data[off + 12 : off + 16])
        dst = ipaddress.IPv4Address(data[off + 16 : off + 20])
        # snaplen may have cut the datagram short; analyze what is present
        end = min(len(data), off + total_len)
        l4 = off + ihl
    elif ether_type == ETH_IPV6:
        if len(data) < off + 40:
            raise MalformedPacket("truncated IPv6 header")
        if data[off] >> 4 != 6:
            raise MalformedPacket("IPv6 version field mismatch")
        plen = struct.unpack_from("!H", data, off + 4)[0]
        if off + 40 + plen > raw.original_len:
            raise MalformedPacket("IPv6 payload length exceeds the frame length")
        proto = data[off + 6]
        ttl = data[off + 7]
        src = ipaddress.IPv6Address(data[off + 8 : off + 24])
        dst = ipaddress.IPv6Address(data[off + 24 : off + 40])
        end = min(len(data), off + 40 + plen)
        l4 = off + 40
        while proto in _IPV6_EXT_HEADERS or proto == _IPV6_FRAGMENT:
            if l4 + 8 > end:
                raise MalformedPacket("truncated IPv6 extension header")
            nxt = data[l4]
            if proto == _IPV6_FRAGMENT:
                if struct.unpack_from("!H", data, l4 + 2)[0] & 0xFFF8:
                    raise MalformedPacket("non-first IPv6 fragment")
                l4 += 8
            else:
                l4 += (data[l4 + 1] + 1) * 8
            proto = nxt
    else:
        return ParsedPacket(**base)

    base.update(src_ip=src, dst_ip=dst, ip_ttl=ttl, ip_protocol=proto, traffic_mode=traffic_mode_of(dst))

    if proto == IPPROTO_TCP:
        if end < l4 + 20:
            raise MalformedPacket("truncated TCP header")
        sport, dport, seq = struct.unpack_from("!HHI", data, l4)
        doff = (data[l4 + 12] >> 4) * 4
        if doff < 20 or l4 + doff > end:
            raise MalformedPacket("inconsistent TCP data offset")
        bits = data[l4 + 13]
        flags = frozenset(name for bit, name in _FLAG_NAMES.items() if bits & bit)
        return ParsedPacket(
            **base, src_port=sport, dst_port=dport, tcp_seq=seq, tcp_flags=flags, payload=bytes(data[l4 + doff : end])
        )
    if proto == IPPROTO_UDP:
        if end < l4 + 8:
            raise MalformedPacket("truncated UDP header")
        sport, dport, ulen = struct.unpack_from("!HHH", data, l4)
        if ulen < 8:
            raise MalformedPacket("UDP length below header size")
        stop = min(end, l4 + ulen)
        return ParsedPacket(**base, src_port=sport, dst_port=dport, payload=bytes(data[l4 + 8 : stop]))
    return ParsedPacket(**base)


@dataclass
class DecodeStats:
    decoded: int = 0
    malformed: int = 0
    non_ip: int = 0


def decode_stream(raws: Iterable[RawPacket], stats: Optional[DecodeStats] = None) -> Iterator[ParsedPacket]:
    """Decode a record stream, skipping (and counting) malformed packets."""
    stats = stats if stats is not None else DecodeStats()
    for raw in raws:
        try:
            pkt = decode_packet(raw)
        except MalformedPacket as exc:
            stats.malformed += 1
            log.debug("malformed-packet skipped: %s", exc)
            continue
        stats.decoded += 1
        if not pkt.is_ip:
            stats.non_ip += 1
        yield pkt
