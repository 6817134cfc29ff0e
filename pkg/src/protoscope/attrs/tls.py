"""TLS handshake attributes from reassembled record streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

from ..flows import REQUEST, RESPONSE, Flow, ordered_payload
from .base import ExtractionFailed

CONTENT_HANDSHAKE = 0x16
HS_CLIENT_HELLO = 1
HS_SERVER_HELLO = 2
HS_CERTIFICATE = 11
EXT_SUPPORTED_VERSIONS = 43

Version = Tuple[int, int]

VERSION_NAMES = {
    (3, 0): "SSL3.0",
    (3, 1): "TLS1.0",
    (3, 2): "TLS1.1",
    (3, 3): "TLS1.2",
    (3, 4): "TLS1.3",
}


def version_name(v: Optional[Version]) -> str:
    if v is None:
        return "-"
    return VERSION_NAMES.get(tuple(v), f"{v[0]}.{v[1]}")


@dataclass(frozen=True)
class ClientHello:
    record_version: Version
    version: Version
    cipher_suites: Tuple[int, ...]
    extensions: Tuple[Tuple[int, int], ...]
    extensions_total: int
    supported_versions: Tuple[Version, ...] = ()


@dataclass(frozen=True)
class ServerHello:
    record_version: Version
    version: Version
    cipher: int
    extensions: Tuple[Tuple[int, int], ...]
    selected_version: Optional[Version] = None


@dataclass(frozen=True)
class TlsAttributes:
    client_hello_version: Version
    client_cipher_suites: Tuple[int, ...]
    client_extensions: Tuple[Tuple[int, int], ...]
    client_extensions_total: int
    client_record_version: Version
    server_hello_version: Optional[Version] = None
    server_record_version: Optional[Version] = None
    server_selected_cipher: Optional[int] = None
    server_extensions: Tuple[Tuple[int, int], ...] = ()
    certificate_seen: bool = False
    anomalies: Tuple[str, ...] = field(default=())

    @property
    def negotiated_version(self) -> Optional[Version]:
        return self.server_hello_version


def cipher_plot_value(code: int) -> float:
    """Binary logarithm of a cipher code, as used on cipher-list fingerprint plots."""
    if code <= 0:
        raise ValueError("undefined-input: cipher code must be positive")
    return math.log2(code)


# --------------------------------------------------------------------------


def handshake_messages(stream: bytes) -> Iterator[Tuple[Version, int, bytes]]:
    """Yield (record_version, handshake_type, body) for handshake messages in a record stream.

    Handshake messages may span records; parsing stops at the first
    non-handshake record or at truncation.
    """
    buf = bytearray()
    rec_version: Version = (0, 0)
    off = 0
    while off + 5 <= len(stream):
        ctype = stream[off]
        ver = (stream[off + 1], stream[off + 2])
        length = int.from_bytes(stream[off + 3 : off + 5], "big")
        if ctype != CONTENT_HANDSHAKE:
            break
        if not buf:
            rec_version = ver
        buf += stream[off + 5 : off + 5 + length]
        truncated = off + 5 + length > len(stream)
        off += 5 + length
        while len(buf) >= 4:
            mlen = int.from_bytes(buf[1:4], "big")
            if len(buf) < 4 + mlen:
                break
            yield rec_version, buf[0], bytes(buf[4 : 4 + mlen])
            del buf[: 4 + mlen]
            rec_version = ver
        if truncated:
            break


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise ExtractionFailed("truncated hello message")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def remaining(self) -> int:
        return len(self.data) - self.off


def _extensions(r: _Reader) -> Tuple[List[Tuple[int, int, bytes]], int]:
    if r.remaining() < 2:
        return [], 0
    total = r.u16()
    block = _Reader(r.take(total))
    out = []
    while block.remaining() >= 4:
        etype, elen = block.u16(), block.u16()
        out.append((etype, elen, block.take(elen)))
    return out, total


def parse_client_hello(body: bytes, record_version: Version = (3, 1)) -> ClientHello:
    r = _Reader(body)
    version = (r.u8(), r.u8())
    r.take(32)
    r.take(r.u8())  # session id
    n = r.u16()
    if n % 2:
        raise ExtractionFailed("odd cipher-suite vector length")
    raw = r.take(n)
    ciphers = tuple(int.from_bytes(raw[i : i + 2], "big") for i in range(0, n, 2))
    r.take(r.u8())  # compression methods
    exts, total = _extensions(r)
    supported: Tuple[Version, ...] = ()
    for etype, _, data in exts:
        if etype == EXT_SUPPORTED_VERSIONS and data:
            vs = data[1 : 1 + data[0]]
            supported = tuple((vs[i], vs[i + 1]) for i in range(0, len(vs) - 1, 2))
    return ClientHello(record_version, version, ciphers, tuple((t, l) for t, l, _ in exts), total, supported)


def parse_server_hello(body: bytes, record_version: Version = (3, 1)) -> ServerHello:
    r = _Reader(body)
    version = (r.u8(), r.u8())
    r.take(32)
    r.take(r.u8())
    cipher = r.u16()
    r.u8()  # compression method
    exts, _ = _extensions(r)
    selected = None
    for etype, _, data in exts:
        if etype == EXT_SUPPORTED_VERSIONS and len(data) >= 2:
            selected = (data[0], data[1])
    return ServerHello(record_version, version, cipher, tuple((t, l) for t, l, _ in exts), selected)


def extract_tls(f: Flow) -> TlsAttributes:
    client: Optional[ClientHello] = None
    for rv, htype, body in handshake_messages(ordered_payload(f, REQUEST).data):
        if htype == HS_CLIENT_HELLO:
            client = parse_client_hello(body, rv)
            break
    if client is None:
        raise ExtractionFailed("no ClientHello in request stream")

    server: Optional[ServerHello] = None
    cert = False
    try:
        for rv, htype, body in handshake_messages(ordered_payload(f, RESPONSE).data):
            if htype == HS_SERVER_HELLO and server is None:
                server = parse_server_hello(body, rv)
            elif htype == HS_CERTIFICATE:
                cert = True
    except ExtractionFailed:
        server = None

    anomalies = []
    if server is not None and server.cipher not in client.cipher_suites:
        anomalies.append("server-cipher-not-offered")
    server_version = None
    if server is not None:
        server_version = server.selected_version or server.version
    return TlsAttributes(
        client_hello_version=client.version,
        client_cipher_suites=client.cipher_suites,
        client_extensions=client.extensions,
        client_extensions_total=client.extensions_total,
        client_record_version=client.record_version,
        server_hello_version=server_version,
        server_record_version=server.record_version if server else None,
        server_selected_cipher=server.cipher if server else None,
        server_extensions=server.extensions if server else (),
        certificate_seen=cert,
        anomalies=tuple(anomalies),
    )
