from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple

from ..flows import REQUEST, RESPONSE, Flow, datagrams, ordered_payload
from .base import ExtractionFailed


@dataclass(frozen=True)
class DnsMessage:
    transaction_id: int
    is_response: bool
    opcode: int
    rcode: int
    questions: Tuple[Tuple[str, int], ...]


@dataclass(frozen=True)
class DnsAttributes:
    transaction_id: int
    is_response: Tuple[bool, ...]
    query_names: Tuple[str, ...]
    query_types: Tuple[int, ...]
    response_code: Optional[int] = None


def read_name(msg: bytes, off: int) -> Tuple[str, int]:
    """Decode a possibly-compressed name at ``off``; returns (name, offset after the name).

    Pointer loops are detected with a visited-offset set.
    """
    labels: List[str] = []
    visited = set()
    end: Optional[int] = None
    total = 0
    while True:
        if off >= len(msg):
            raise ExtractionFailed("name runs past end of message")
        length = msg[off]
        if length & 0xC0 == 0xC0:
            if off + 1 >= len(msg):
                raise ExtractionFailed("truncated compression pointer")
            target = ((length & 0x3F) << 8) | msg[off + 1]
            if end is None:
                end = off + 2
            if target in visited:
                raise ExtractionFailed("compression pointer loop")
            visited.add(target)
            off = target
            continue
        if length & 0xC0:
            raise ExtractionFailed("reserved label type")
        if length == 0:
            if end is None:
                end = off + 1
            return ".".join(labels), end
        if off + 1 + length > len(msg):
            raise ExtractionFailed("label runs past end of message")
        total += length + 1
        if total > 255:
            raise ExtractionFailed("name longer than 255 octets")
        labels.append(msg[off + 1 : off + 1 + length].decode("ascii", "replace"))
        off += 1 + length


def parse_message(msg: bytes) -> DnsMessage:
    if len(msg) < 12:
        raise ExtractionFailed("DNS message shorter than header")
    tid, flags, qd, _an, _ns, _ar = struct.unpack_from("!HHHHHH", msg, 0)
    off = 12
    questions = []
    for _ in range(qd):
        name, off = read_name(msg, off)
        if off + 4 > len(msg):
            raise ExtractionFailed("truncated question")
        qtype, _qclass = struct.unpack_from("!HH", msg, off)
        off += 4
        questions.append((name, qtype))
    return DnsMessage(tid, bool(flags & 0x8000), (flags >> 11) & 0xF, flags & 0xF, tuple(questions))


def _messages(f: Flow, direction: str) -> List[bytes]:
    if not f.is_tcp:
        return datagrams(f, direction)
    # DNS over TCP: 2-byte length prefix per message
    stream = ordered_payload(f, direction).data
    out, off = [], 0
    while off + 2 <= len(stream):
        n = int.from_bytes(stream[off : off + 2], "big")
        if off + 2 + n > len(stream):
            break
        out.append(stream[off + 2 : off + 2 + n])
        off += 2 + n
    return out


def extract_dns(f: Flow) -> DnsAttributes:
    msgs = [parse_message(m) for m in _messages(f, REQUEST)]
    msgs += [parse_message(m) for m in _messages(f, RESPONSE)]
    if not msgs:
        raise ExtractionFailed("no DNS messages")
    seen = []
    for m in msgs:
        for q in m.questions:
            if q not in seen:
                seen.append(q)
    rcode = next((m.rcode for m in msgs if m.is_response), None)
    return DnsAttributes(
        transaction_id=msgs[0].transaction_id,
        is_response=tuple(m.is_response for m in msgs),
        query_names=tuple(n for n, _ in seen),
        query_types=tuple(t for _, t in seen),
        response_code=rcode,
    )
