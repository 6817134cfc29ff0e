from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Optional

from ..flows import REQUEST, RESPONSE, Flow, datagrams
from .base import ExtractionFailed

_START = re.compile(rb"(NOTIFY|M-SEARCH) \* HTTP/1\.\d\r?\n|HTTP/1\.\d 200[^\r\n]*\r?\n")
KINDS = {b"NOTIFY": "notify", b"M-SEARCH": "msearch"}
REQUIRED = {"notify": "nts", "msearch": "st", "response": "st"}


@dataclass(frozen=True)
class SsdpAttributes:
    message_kind: str
    nt: str = ""
    nts: str = ""
    st: str = ""
    usn: str = ""
    ip_ttl: Optional[int] = None
    multicast: bool = False


def _headers(block: bytes) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for line in re.split(rb"\r?\n", block):
        name, sep, value = line.partition(b":")
        if sep and name.strip():
            out.setdefault(name.strip().decode("latin-1").lower(), value.strip().decode("latin-1"))
    return out


def extract_ssdp(f: Flow) -> SsdpAttributes:
    msgs = datagrams(f, REQUEST) or datagrams(f, RESPONSE)
    if not msgs:
        raise ExtractionFailed("empty SSDP flow")
    msg = msgs[0]
    m = _START.match(msg)
    if m is None:
        raise ExtractionFailed("no SSDP start line")
    kind = KINDS.get(m.group(1), "response") if m.group(1) else "response"
    h = _headers(msg[m.end() :])
    required = REQUIRED[kind]
    if not h.get(required):
        raise ExtractionFailed(f"{kind} message lacks the {required.upper()} header")
    first = f.first_packet(REQUEST)
    return SsdpAttributes(
        message_kind=kind,
        nt=h.get("nt", ""),
        nts=h.get("nts", ""),
        st=h.get("st", ""),
        usn=h.get("usn", ""),
        ip_ttl=first.ip_ttl if first is not None else None,
        multicast=first is not None and first.traffic_mode == "multicast",
    )
