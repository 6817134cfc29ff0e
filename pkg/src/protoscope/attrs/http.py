"""HTTP/1.x request and response attributes."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from ..flows import REQUEST, RESPONSE, Flow, ordered_payload
from .base import ExtractionFailed

_REQUEST_LINE = re.compile(rb"([A-Z][A-Z\-]*) (\S+) HTTP/(\d)\.(\d)\r?\n")
_STATUS_LINE = re.compile(rb"HTTP/(\d)\.(\d) (\d{3})(?: ([^\r\n]*))?\r?\n")
# HTTP/0.9 simple request: method and URI, no version
_SIMPLE_REQUEST = re.compile(rb"(GET) (\S+)\r?\n")
_ANY_START = re.compile(rb"(?:[A-Z][A-Z\-]* \S+ HTTP/\d\.\d|HTTP/\d\.\d \d{3})[^\r\n]*\r?\n")

AUTH_SCHEMES = {"basic": "basic", "digest": "digest", "bearer": "bearer"}

Version = Tuple[int, int]


@dataclass(frozen=True)
class HttpExchange:
    method: str = ""
    uri: str = ""
    request_version: Optional[Version] = None
    host: str = ""
    user_agent: str = ""
    auth_type: str = "none"
    auth_credential: str = ""
    response_version: Optional[Version] = None
    status_code: Optional[int] = None
    response_phrase: str = ""
    server_header: str = ""

    @property
    def answered(self) -> bool:
        return self.status_code is not None


def redact(credential: str) -> str:
    if not credential:
        return ""
    digest = hashlib.sha256(credential.encode("utf-8", "replace")).hexdigest()[:12]
    return f"sha256:{digest}/len={len(credential)}"


def _headers(block: bytes) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for line in block.split(b"\n"):
        line = line.rstrip(b"\r")
        if b":" not in line:
            continue
        name, _, value = line.partition(b":")
        key = name.strip().decode("latin-1").lower()
        if key and key not in out:
            out[key] = value.strip().decode("latin-1")
    return out


def _split_messages(stream: bytes, start: "re.Pattern[bytes]") -> List[Tuple["re.Match[bytes]", Dict[str, str]]]:
    """Split a stream into (start-line match, headers) per message.

    Bodies are skipped by Content-Length when present; otherwise the scanner
    looks for the next plausible start line.
    """
    out = []
    off = 0
    n = len(stream)
    while off < n:
        m = start.match(stream, off)
        if m is None:
            nxt = _ANY_START.search(stream, off + 1)
            if nxt is None:
                break
            off = nxt.start()
            m = start.match(stream, off)
            if m is None:
                off += 1
                continue
        head_end = stream.find(b"\r\n\r\n", m.end() - 2)
        sep = 4
        if head_end < 0:
            head_end = stream.find(b"\n\n", m.end() - 1)
            sep = 2
        if head_end < 0:
            headers = _headers(stream[m.end() :])
            out.append((m, headers))
            break
        headers = _headers(stream[m.end() : head_end])
        out.append((m, headers))
        off = head_end + sep
        clen = headers.get("content-length", "")
        if clen.isdigit():
            off += int(clen)
    return out


def _auth(value: str) -> Tuple[str, str]:
    if not value:
        return "none", ""
    scheme, _, cred = value.strip().partition(" ")
    return AUTH_SCHEMES.get(scheme.lower(), "other"), cred.strip()


def extract_http(f: Flow, redact_credentials: bool = True) -> List[HttpExchange]:
    """Request/response pairs of an HTTP flow, i-th request with i-th response."""
    req_stream = ordered_payload(f, REQUEST).data
    rsp_stream = ordered_payload(f, RESPONSE).data
    requests = _split_messages(req_stream, _REQUEST_LINE)
    if not requests:
        simple = _SIMPLE_REQUEST.match(req_stream)
        if simple is None:
            raise ExtractionFailed("no parseable request line")
        requests = [(simple, {})]
    responses = _split_messages(rsp_stream, _STATUS_LINE)

    exchanges = []
    for i, (m, h) in enumerate(requests):
        if m.re is _SIMPLE_REQUEST:
            version: Optional[Version] = (0, 9)
        else:
            version = (int(m.group(3)), int(m.group(4)))
        auth_type, cred = _auth(h.get("authorization", ""))
        if redact_credentials:
            cred = redact(cred)
        ex = dict(
            method=m.group(1).decode("latin-1"),
            uri=m.group(2).decode("latin-1"),
            request_version=version,
            host=h.get("host", ""),
            user_agent=h.get("user-agent", ""),
            auth_type=auth_type,
            auth_credential=cred,
        )
        if i < len(responses):
            rm, rh = responses[i]
            code = int(rm.group(3))
            if 100 <= code <= 599:
                ex.update(
                    response_version=(int(rm.group(1)), int(rm.group(2))),
                    status_code=code,
                    response_phrase=(rm.group(4) or b"").decode("latin-1"),
                    server_header=rh.get("server", ""),
                )
        exchanges.append(HttpExchange(**ex))
    return exchanges
