"""Bidirectional 5-tuple flow table and per-direction payload reassembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .packet_io import IPPROTO_TCP, IPPROTO_UDP, IPAddress, NotIPPacket, ParsedPacket

REQUEST = "request"
RESPONSE = "response"
COMBINED = "combined"
DIRECTIONS = (REQUEST, RESPONSE, COMBINED)

DEFAULT_FLOW_TIMEOUT = 3600.0
DEFAULT_PAYLOAD_CAP = 64 * 1024

Endpoint = Tuple[IPAddress, int]


def _endpoint_sort_key(ep: Endpoint) -> tuple:
    ip, port = ep
    return (ip.version, int(ip), port)


@dataclass(frozen=True, order=True)
class FlowKey:
    endpoint_a: Endpoint
    endpoint_b: Endpoint
    ip_protocol: int

    def __str__(self) -> str:
        name = {IPPROTO_TCP: "TCP", IPPROTO_UDP: "UDP"}.get(self.ip_protocol, str(self.ip_protocol))
        (ia, pa), (ib, pb) = self.endpoint_a, self.endpoint_b
        return f"{name} {ia}:{pa} <-> {ib}:{pb}"


def flow_key(p: ParsedPacket) -> Tuple[FlowKey, str]:
    """Canonical key plus which endpoint sent ``p``: ``"a"`` or ``"b"``."""
    if p.ip_protocol not in (IPPROTO_TCP, IPPROTO_UDP) or p.src_port is None:
        raise NotIPPacket("not-a-flow-packet")
    src: Endpoint = (p.src_ip, p.src_port)
    dst: Endpoint = (p.dst_ip, p.dst_port)
    if _endpoint_sort_key(src) <= _endpoint_sort_key(dst):
        return FlowKey(src, dst, p.ip_protocol), "a"
    return FlowKey(dst, src, p.ip_protocol), "b"


@dataclass
class Flow:
    key: FlowKey
    initiator: str  # "a" or "b"
    packets: List[Tuple[str, ParsedPacket]] = field(default_factory=list)
    first_ts: float = 0.0
    last_ts: float = 0.0
    index: int = 0

    @property
    def client(self) -> Endpoint:
        return self.key.endpoint_a if self.initiator == "a" else self.key.endpoint_b

    @property
    def server(self) -> Endpoint:
        return self.key.endpoint_b if self.initiator == "a" else self.key.endpoint_a

    @property
    def is_tcp(self) -> bool:
        return self.key.ip_protocol == IPPROTO_TCP

    @property
    def request_ip_ttl_first(self) -> Optional[int]:
        for d, p in self.packets:
            if d == REQUEST:
                return p.ip_ttl
        return None

    def direction_packets(self, direction: str) -> List[ParsedPacket]:
        return [p for d, p in self.packets if d == direction]

    def first_packet(self, direction: str) -> Optional[ParsedPacket]:
        for d, p in self.packets:
            if d == direction:
                return p
        return None

    def with_ports(self, client_port: int, server_port: int) -> "Flow":
        """Copy of this flow with both transport ports rewritten (payloads untouched)."""
        from dataclasses import replace

        pkts = []
        for d, p in self.packets:
            if d == REQUEST:
                pkts.append((d, replace(p, src_port=client_port, dst_port=server_port)))
            else:
                pkts.append((d, replace(p, src_port=server_port, dst_port=client_port)))
        key, side = flow_key(pkts[0][1])
        initiator = side if pkts[0][0] == REQUEST else ("b" if side == "a" else "a")
        return Flow(key, initiator, pkts, self.first_ts, self.last_ts, self.index)

    def _relabel(self) -> None:
        self.packets = [(_direction_for(self.key, self.initiator, p), p) for _, p in self.packets]


def _direction_for(key: FlowKey, initiator: str, p: ParsedPacket) -> str:
    side = "a" if (p.src_ip, p.src_port) == key.endpoint_a else "b"
    if key.endpoint_a == key.endpoint_b:
        side = initiator
    return REQUEST if side == initiator else RESPONSE


def _is_pure_syn(p: ParsedPacket) -> bool:
    return "SYN" in p.tcp_flags and "ACK" not in p.tcp_flags


def assemble(packets: Iterable[ParsedPacket], flow_timeout: float = DEFAULT_FLOW_TIMEOUT) -> List[Flow]:
    """Group packets into flows, in order of each flow's first packet.

    The initiator is whoever sent the first packet, unless a TCP SYN without
    ACK shows up, in which case its sender wins. An idle gap longer than
    ``flow_timeout`` on a key starts a new flow.
    """
    active: Dict[FlowKey, Flow] = {}
    syn_seen: Dict[int, bool] = {}
    flows: List[Flow] = []
    for p in packets:
        try:
            key, side = flow_key(p)
        except NotIPPacket:
            continue
        ts = p.timestamp
        f = active.get(key)
        if f is not None and ts - f.last_ts > flow_timeout:
            f = None
        if f is None:
            f = Flow(key=key, initiator=side, first_ts=ts, last_ts=ts, index=len(flows))
            active[key] = f
            flows.append(f)
            syn_seen[f.index] = False
        if key.ip_protocol == IPPROTO_TCP and _is_pure_syn(p) and not syn_seen[f.index]:
            syn_seen[f.index] = True
            if f.initiator != side:
                f.initiator = side
                f._relabel()
        f.packets.append((_direction_for(key, f.initiator, p), p))
        f.first_ts = min(f.first_ts, ts)
        f.last_ts = max(f.last_ts, ts)
    return flows


@dataclass(frozen=True)
class Payload:
    """Reassembled bytes of one direction; ``gap`` marks truncation at a missing segment."""

    data: bytes
    gap: bool = False
    capped: bool = False


def _tcp_stream(pkts: List[ParsedPacket], cap: int) -> Payload:
    isn: Optional[int] = None
    for p in pkts:
        if "SYN" in p.tcp_flags:
            isn = (p.tcp_seq + 1) & 0xFFFFFFFF
            break
    segs = [p for p in pkts if p.payload]
    if not segs:
        return Payload(b"")
    if isn is None:
        # no handshake seen: lowest sequence, compared as signed offsets from the first segment
        ref = segs[0].tcp_seq
        isn = min(segs, key=lambda p: ((p.tcp_seq - ref + 0x80000000) & 0xFFFFFFFF)).tcp_seq
    # first-writer-wins: walk segments in arrival order, only bytes not yet covered are written
    filled: Dict[int, int] = {}
    for p in segs:
        rel = (p.tcp_seq - isn) & 0xFFFFFFFF
        if rel >= 0x80000000:  # segment entirely before ISN (e.g. keepalive probe)
            continue
        for i, b in enumerate(p.payload):
            pos = rel + i
            if pos >= cap:
                break
            if pos not in filled:
                filled[pos] = b
    n = 0
    while n in filled:
        n += 1
    buf = bytes(filled[i] for i in range(n))
    gap = len(filled) > n
    return Payload(buf, gap=gap, capped=n >= cap)


def ordered_payload(f: Flow, direction: str, cap: int = DEFAULT_PAYLOAD_CAP) -> Payload:
    """Contiguous application bytes of one direction; ``combined`` is the request
    stream followed by the response stream."""
    if direction == COMBINED:
        req = ordered_payload(f, REQUEST, cap)
        rsp = ordered_payload(f, RESPONSE, cap)
        return Payload(req.data + rsp.data, req.gap or rsp.gap, req.capped or rsp.capped)
    pkts = f.direction_packets(direction)
    if f.is_tcp:
        return _tcp_stream(pkts, cap)
    data = b"".join(p.payload for p in pkts)
    return Payload(data[:cap], capped=len(data) > cap)


def datagrams(f: Flow, direction: str) -> List[bytes]:
    """Individual non-empty payloads of one direction, in arrival order."""
    return [p.payload for p in f.direction_packets(direction) if p.payload]
