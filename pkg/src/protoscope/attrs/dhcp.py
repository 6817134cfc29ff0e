from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

from ..flows import REQUEST, Flow, datagrams
from .base import ExtractionFailed

MAGIC_COOKIE = b"\x63\x82\x53\x63"
FIXED_LEN = 236
MIN_LEN = FIXED_LEN + 4

OPT_PAD = 0
OPT_HOSTNAME = 12
OPT_MESSAGE_TYPE = 53
OPT_PARAM_REQUEST = 55
OPT_END = 255

OP_NAMES = {1: "request", 2: "reply"}


@dataclass(frozen=True)
class DhcpAttributes:
    op: str
    magic_cookie_ok: bool
    message_type: Optional[int] = None
    parameter_request_list: Tuple[int, ...] = ()
    requested_hostname: str = ""
    options: Tuple[int, ...] = ()


def parse_dhcp(msg: bytes) -> DhcpAttributes:
    if len(msg) < MIN_LEN:
        raise ExtractionFailed("DHCP message shorter than 240 bytes")
    op = OP_NAMES.get(msg[0], str(msg[0]))
    if msg[FIXED_LEN:MIN_LEN] != MAGIC_COOKIE:
        return DhcpAttributes(op, False)
    mtype = None
    prl: Tuple[int, ...] = ()
    hostname = ""
    seen = []
    off = MIN_LEN
    while off < len(msg):
        code = msg[off]
        if code == OPT_END:
            break
        if code == OPT_PAD:
            off += 1
            continue
        if off + 1 >= len(msg):
            break
        n = msg[off + 1]
        val = msg[off + 2 : off + 2 + n]
        if len(val) < n:
            break
        seen.append(code)
        if code == OPT_MESSAGE_TYPE and n >= 1:
            mtype = val[0]
        elif code == OPT_PARAM_REQUEST:
            prl = tuple(val)
        elif code == OPT_HOSTNAME:
            hostname = val.decode("ascii", "replace")
        off += 2 + n
    return DhcpAttributes(op, True, mtype, prl, hostname, tuple(seen))


def extract_dhcp(f: Flow) -> DhcpAttributes:
    msgs = datagrams(f, REQUEST)
    if not msgs:
        raise ExtractionFailed("no DHCP message in request direction")
    return parse_dhcp(msgs[0])
