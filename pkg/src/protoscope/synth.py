"""Ground-truth packet corpora built from protocol layouts.

Each FlowSpec describes one conversation (protocol, endpoints, protocol
parameters, segmentation). ``synth_flow`` renders it to Ethernet frames and
``synth_corpus`` interleaves many flows into a pcap plus a ground-truth JSON
file listing what the analyzer is expected to report for every flow.
"""

from __future__ import annotations

import base64
import ipaddress
import json
import random
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .packet_io import RawPacket, write_pcap

PROTOCOLS = ("TLS", "HTTP", "DNS", "NTP", "DHCP", "SSDP", "NONE")
SEGMENTATIONS = ("single", "per_byte", "random")
TCP_PROTOCOLS = {"TLS", "HTTP"}
DEFAULT_SERVER_PORTS = {"TLS": 443, "HTTP": 80, "DNS": 53, "NTP": 123, "DHCP": 67, "SSDP": 1900}
SSDP_GROUP = "239.255.255.250"
PACKET_SPACING = 0.001
BASE_TIME = 1_477_000_000  # an arbitrary fixed epoch second keeps outputs byte-stable


class SpecError(ValueError):
    pass


@dataclass
class FlowSpec:
    protocol: str
    client: str = "10.0.0.2"
    server: str = "10.0.0.1"
    client_port: Optional[int] = None
    server_port: Optional[int] = None
    params: Dict[str, Any] = field(default_factory=dict)
    segmentation: str = "single"
    seed: int = 0
    device: str = ""
    transport: Optional[str] = None  # "TCP"/"UDP"; only consulted for NONE flows
    start: Optional[float] = None

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "FlowSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown FlowSpec field(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @property
    def is_tcp(self) -> bool:
        if self.protocol in TCP_PROTOCOLS:
            return True
        if self.protocol == "NONE":
            return (self.transport or "TCP").upper() == "TCP"
        return False

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise SpecError(f"unknown protocol {self.protocol!r}")
        if self.segmentation not in SEGMENTATIONS:
            raise SpecError(f"unknown segmentation {self.segmentation!r}")
        for ip in (self.client, self.server):
            try:
                ipaddress.ip_address(ip)
            except ValueError:
                raise SpecError(f"bad IP address {ip!r}") from None
        for port in (self.client_port, self.server_port):
            if port is not None and not 0 < port < 65536:
                raise SpecError(f"port {port} out of range")
        if self.protocol == "TLS":
            if not self.params.get("ciphers"):
                raise SpecError("TLS spec needs a nonempty cipher list")
            if self.params.get("server_cipher") is not None and not 0 <= self.params["server_cipher"] <= 0xFFFF:
                raise SpecError("server_cipher must be a 16-bit code")
        if self.protocol == "NTP":
            for k in ("version", "server_version"):
                if k in self.params and not 0 <= self.params[k] <= 7:
                    raise SpecError(f"NTP {k} must fit in 3 bits")
            for k in ("mode", "server_mode"):
                if k in self.params and not 0 <= self.params[k] <= 7:
                    raise SpecError(f"NTP {k} must fit in 3 bits")
        if self.protocol == "HTTP":
            status = self.params.get("status", 200)
            if status is not None and not 100 <= status <= 599:
                raise SpecError("HTTP status outside 100-599")
        if self.protocol == "SSDP":
            kind = self.params.get("kind", "notify")
            if kind not in ("notify", "msearch", "response", "bare"):
                raise SpecError(f"unknown SSDP kind {kind!r}")


# --------------------------------------------------------------------------
# protocol payloads


def _filler(n: int, tag: int) -> bytes:
    return bytes((tag + i * 7) & 0xFF for i in range(n))


def _version_tuple(v: Union[str, Sequence[int]]) -> Tuple[int, int]:
    names = {"SSL3.0": (3, 0), "TLS1.0": (3, 1), "TLS1.1": (3, 2), "TLS1.2": (3, 3), "TLS1.3": (3, 4),
             "1.0": (3, 1), "1.1": (3, 2), "1.2": (3, 3), "1.3": (3, 4)}
    if isinstance(v, str):
        return names[v]
    return (int(v[0]), int(v[1]))


def _tls_extensions(exts: Sequence[Any], sni: str = "") -> bytes:
    out = bytearray()
    if sni:
        name = sni.encode()
        body = struct.pack("!HBH", len(name) + 3, 0, len(name)) + name
        out += struct.pack("!HH", 0, len(body)) + body
    for i, e in enumerate(exts):
        if isinstance(e, dict):
            etype = int(e["type"])
            data = bytes.fromhex(e["data"]) if "data" in e else _filler(int(e.get("length", 0)), etype + i)
        else:
            etype, length = int(e[0]), int(e[1])
            data = _filler(length, etype + i)
        out += struct.pack("!HH", etype, len(data)) + data
    return bytes(out)


def _handshake(htype: int, body: bytes) -> bytes:
    return bytes([htype]) + len(body).to_bytes(3, "big") + body


def _records(record_version: Tuple[int, int], payload: bytes, ctype: int = 0x16) -> bytes:
    out = bytearray()
    for i in range(0, len(payload), 16384):
        chunk = payload[i : i + 16384]
        out += bytes([ctype, *record_version]) + struct.pack("!H", len(chunk)) + chunk
    return bytes(out)


def tls_client_hello(
    version=(3, 3),
    ciphers: Sequence[int] = (0xC02F,),
    extensions: Sequence[Any] = (),
    record_version=(3, 1),
    sni: str = "",
    seed: int = 0,
) -> bytes:
    rnd = random.Random(seed)
    ext = _tls_extensions(extensions, sni)
    body = bytes(_version_tuple(version)) + bytes(rnd.getrandbits(8) for _ in range(32))
    body += b"\x00"  # empty session id
    body += struct.pack("!H", 2 * len(ciphers)) + b"".join(struct.pack("!H", c) for c in ciphers)
    body += b"\x01\x00"
    if ext or extensions or sni:
        body += struct.pack("!H", len(ext)) + ext
    return _records(_version_tuple(record_version), _handshake(1, body))


def tls_server_flight(
    version=(3, 3),
    cipher: int = 0xC02F,
    extensions: Sequence[Any] = (),
    record_version=(3, 3),
    certificate: bool = True,
    supported_version=None,
    seed: int = 0,
) -> bytes:
    rnd = random.Random(seed + 1)
    exts = list(extensions)
    if supported_version is not None:
        exts.append({"type": 43, "data": bytes(_version_tuple(supported_version)).hex()})
    ext = _tls_extensions(exts)
    body = bytes(_version_tuple(version)) + bytes(rnd.getrandbits(8) for _ in range(32))
    body += b"\x20" + bytes(rnd.getrandbits(8) for _ in range(32))
    body += struct.pack("!HB", cipher, 0)
    if ext:
        body += struct.pack("!H", len(ext)) + ext
    msgs = _handshake(2, body)
    if certificate:
        cert = _filler(180, 0x30)
        cert_list = len(cert).to_bytes(3, "big") + cert
        msgs += _handshake(11, len(cert_list).to_bytes(3, "big") + cert_list)
    msgs += _handshake(14, b"")
    return _records(_version_tuple(record_version), msgs)


def _http_version(v: Union[str, float, Sequence[int]]) -> str:
    if isinstance(v, (list, tuple)):
        return f"{v[0]}.{v[1]}"
    return str(v)


def http_request(
    method="GET", uri="/", version="1.1", host="", user_agent="", auth=None, body: int = 0, extra_headers=()
) -> bytes:
    ver = _http_version(version)
    if ver == "0.9":
        return f"{method} {uri}\r\n".encode()
    lines = [f"{method} {uri} HTTP/{ver}"]
    if host:
        lines.append(f"Host: {host}")
    if user_agent:
        lines.append(f"User-Agent: {user_agent}")
    if auth:
        scheme = auth.get("scheme", "Basic")
        cred = auth.get("credential")
        if cred is None:
            cred = base64.b64encode(f"{auth.get('user', 'user')}:{auth.get('password', 'pw')}".encode()).decode()
        lines.append(f"Authorization: {scheme} {cred}")
    lines.extend(extra_headers)
    if body:
        lines.append(f"Content-Length: {body}")
    return ("\r\n".join(lines) + "\r\n\r\n").encode() + _filler(body, 0x41) if body else ("\r\n".join(lines) + "\r\n\r\n").encode()


def http_response(version="1.1", status=200, phrase="OK", server="", body: int = 0) -> bytes:
    lines = [f"HTTP/{_http_version(version)} {status} {phrase}".rstrip()]
    if server:
        lines.append(f"Server: {server}")
    lines.append(f"Content-Length: {body}")
    return ("\r\n".join(lines) + "\r\n\r\n").encode() + bytes(body)


def _dns_name(name: str) -> bytes:
    out = bytearray()
    for label in name.strip(".").split("."):
        if label:
            out += bytes([len(label)]) + label.encode()
    return bytes(out) + b"\x00"


def dns_query(qname="example.com", qtype=1, tid=0x1234) -> bytes:
    return struct.pack("!HHHHHH", tid, 0x0100, 1, 0, 0, 0) + _dns_name(qname) + struct.pack("!HH", qtype, 1)


def dns_response(qname="example.com", qtype=1, tid=0x1234, rcode=0, answer_ip="93.184.216.34") -> bytes:
    ancount = 1 if rcode == 0 and qtype == 1 else 0
    msg = struct.pack("!HHHHHH", tid, 0x8180 | (rcode & 0xF), 1, ancount, 0, 0)
    msg += _dns_name(qname) + struct.pack("!HH", qtype, 1)
    if ancount:
        msg += b"\xc0\x0c" + struct.pack("!HHIH", 1, 1, 300, 4) + ipaddress.IPv4Address(answer_ip).packed
    return msg


def ntp_packet(version=4, mode=3, stratum=0, org_zero=True, seed=0) -> bytes:
    rnd = random.Random(seed)
    first = (0 << 6) | ((version & 7) << 3) | (mode & 7)
    poll, precision = 6, 0xEC
    head = struct.pack("!BBbb", first, stratum, poll, -20 if precision else 0)
    if mode == 3:
        rest = bytes(4 + 4 + 4 + 8 + 8 + 8) + rnd.getrandbits(64).to_bytes(8, "big")
    else:
        ts = lambda: rnd.getrandbits(64).to_bytes(8, "big")  # noqa: E731
        org = bytes(8) if org_zero else ts()
        rest = struct.pack("!II", 0x00000010, 0x00000020) + b"GPS\x00" + ts() + org + ts() + ts()
    return head + rest


def dhcp_message(
    op=1, message_type=1, params=(1, 3, 6, 15), hostname="", cookie_ok=True, xid=0x3903F326, mac="02:00:00:00:00:02",
    extra_options=(),
) -> bytes:
    chaddr = bytes.fromhex(mac.replace(":", "")) + bytes(10)
    fixed = struct.pack("!BBBBIHH", op, 1, 6, 0, xid, 0, 0x8000) + bytes(16) + chaddr + bytes(64 + 128)
    cookie = b"\x63\x82\x53\x63" if cookie_ok else b"\x00\x00\x00\x00"
    opts = bytearray([53, 1, message_type])
    if hostname:
        opts += bytes([12, len(hostname)]) + hostname.encode()
    if params:
        opts += bytes([55, len(params), *params])
    for code, value in extra_options:
        data = bytes.fromhex(value) if isinstance(value, str) else bytes(value)
        opts += bytes([code, len(data)]) + data
    opts += b"\xff"
    return fixed + cookie + bytes(opts)


def ssdp_message(kind="notify", nt="upnp:rootdevice", nts="ssdp:alive", st="ssdp:discover", usn="", location="") -> bytes:
    usn = usn or "uuid:2fac1234-31f8-11b4-a222-08002b34c003::upnp:rootdevice"
    if kind == "bare":
        return b"NOTIFY * HTTP/1.1\r\n\r\n"
    if kind == "notify":
        lines = ["NOTIFY * HTTP/1.1", "HOST: 239.255.255.250:1900", "CACHE-CONTROL: max-age=1800"]
        if location:
            lines.append(f"LOCATION: {location}")
        lines += [f"NT: {nt}"] + ([f"NTS: {nts}"] if nts else []) + [f"USN: {usn}"]
    elif kind == "msearch":
        lines = ["M-SEARCH * HTTP/1.1", "HOST: 239.255.255.250:1900", 'MAN: "ssdp:discover"', "MX: 2"]
        lines += [f"ST: {st}"] if st else []
    else:
        lines = ["HTTP/1.1 200 OK", "CACHE-CONTROL: max-age=1800", f"ST: {st}", f"USN: {usn}"]
    return ("\r\n".join(lines) + "\r\n\r\n").encode()


_NEGATIVE_PAYLOADS = {
    "ssh": (b"SSH-2.0-OpenSSH_8.9p1 Ubuntu-3\r\n", b"SSH-2.0-OpenSSH_7.4\r\n"),
    "mqtt": (bytes.fromhex("101800044d5154540402003c000c696f742d6465766963652d31"), bytes.fromhex("20020000")),
    "smtp": (b"EHLO device.local\r\n", b"220 mail.example.com ESMTP Postfix\r\n"),
    "rtsp": (b"OPTIONS rtsp://10.0.0.1/stream RTSP/1.0\r\nCSeq: 1\r\n\r\n", b"RTSP/1.0 200 OK\r\nCSeq: 1\r\n\r\n"),
    "sip": (b"REGISTER sip:example.com SIP/2.0\r\nVia: SIP/2.0/UDP 10.0.0.2\r\n\r\n", b"SIP/2.0 200 OK\r\n\r\n"),
    "coap": (bytes.fromhex("4001a1b2b474656d70"), bytes.fromhex("6045a1b2ff3232")),
    "stun": (bytes.fromhex("000100002112a442") + bytes(12), bytes.fromhex("010100002112a442") + bytes(12)),
    "zeros": (bytes(40), bytes(40)),
    "telnet": (bytes.fromhex("fffb01fffb03fffd18fffd1f"), b"\r\nlogin: "),
    "ftp": (b"USER anonymous\r\n", b"220 (vsFTPd 3.0.3)\r\n"),
    "redis": (b"*1\r\n$4\r\nPING\r\n", b"+PONG\r\n"),
}


def _negative_payloads(kind: str, seed: int) -> Tuple[bytes, bytes]:
    if kind == "random":
        rnd = random.Random(seed)
        n1, n2 = rnd.randrange(20, 47), rnd.randrange(75, 300)
        return bytes(rnd.getrandbits(8) for _ in range(n1)), bytes(rnd.getrandbits(8) for _ in range(n2))
    return _NEGATIVE_PAYLOADS[kind]


# --------------------------------------------------------------------------
# conversation script: list of (direction, payload, ttl)


def _script(spec: FlowSpec) -> List[Tuple[str, bytes]]:
    p = spec.params
    proto = spec.protocol
    if proto == "TLS":
        hello = tls_client_hello(
            version=p.get("client_version", (3, 3)),
            ciphers=p["ciphers"],
            extensions=p.get("extensions", ()),
            record_version=p.get("record_version", (3, 1)),
            sni=p.get("sni", ""),
            seed=spec.seed,
        )
        out = [("request", hello)]
        if p.get("server_cipher") is not None:
            out.append(("response", tls_server_flight(
                version=p.get("server_version", p.get("client_version", (3, 3))),
                cipher=p["server_cipher"],
                extensions=p.get("server_extensions", ()),
                record_version=p.get("server_record_version", p.get("server_version", (3, 3))),
                certificate=p.get("certificate", True),
                supported_version=p.get("server_supported_version"),
                seed=spec.seed,
            )))
            # application data so the flow carries more than the handshake
            out.append(("request", _records((3, 3), _filler(64, 0x17), ctype=0x17)))
        return out
    if proto == "HTTP":
        exchanges = p.get("exchanges") or [p]
        out = []
        for ex in exchanges:
            out.append(("request", http_request(
                method=ex.get("method", "GET"), uri=ex.get("uri", "/"), version=ex.get("version", "1.1"),
                host=ex.get("host", ""), user_agent=ex.get("user_agent", ""), auth=ex.get("auth"),
                body=ex.get("request_body", 0),
            )))
            if ex.get("status") is not None or "status" not in ex:
                status = ex.get("status", 200)
                out.append(("response", http_response(
                    version=ex.get("response_version", ex.get("version", "1.1") if ex.get("version") != "0.9" else "1.0"),
                    status=status, phrase=ex.get("phrase", "OK"), server=ex.get("server", ""),
                    body=ex.get("response_body", 16),
                )))
        return out
    if proto == "DNS":
        tid = p.get("tid", 0x1000 + spec.seed)
        out = [("request", dns_query(p.get("qname", "example.com"), p.get("qtype", 1), tid))]
        if p.get("answer", True):
            out.append(("response", dns_response(p.get("qname", "example.com"), p.get("qtype", 1), tid, p.get("rcode", 0))))
        return out
    if proto == "NTP":
        out = [("request", ntp_packet(p.get("version", 4), p.get("mode", 3), 0, True, spec.seed))]
        if p.get("answer", True):
            out.append(("response", ntp_packet(
                p.get("server_version", p.get("version", 4)), p.get("server_mode", 4), p.get("stratum", 2),
                p.get("org_zero", False), spec.seed + 7,
            )))
        return out
    if proto == "DHCP":
        return [("request", dhcp_message(
            op=p.get("op", 1), message_type=p.get("message_type", 1), params=tuple(p.get("params", (1, 3, 6, 15))),
            hostname=p.get("hostname", ""), cookie_ok=p.get("cookie_ok", True),
            xid=p.get("xid", 0x3903F326 + spec.seed), extra_options=p.get("extra_options", ()),
        ))]
    if proto == "SSDP":
        kind = p.get("kind", "notify")
        msg = ssdp_message(kind, p.get("nt", "upnp:rootdevice"), p.get("nts", "ssdp:alive"),
                           p.get("st", "ssdp:discover"), p.get("usn", ""), p.get("location", ""))
        repeat = 1 if kind == "bare" else p.get("repeat", 1)
        return [("request", msg)] * repeat
    req, rsp = _negative_payloads(p.get("kind", "random"), spec.seed)
    return [("request", req), ("response", rsp)]


# --------------------------------------------------------------------------
# framing


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    s = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def _mac_for(ip) -> bytes:
    if ip.is_multicast and ip.version == 4:
        return bytes([0x01, 0x00, 0x5E]) + (int(ip) & 0x7FFFFF).to_bytes(3, "big")
    if ip.is_multicast:
        return bytes([0x33, 0x33]) + ip.packed[-4:]
    if ip.version == 4 and int(ip) == 0xFFFFFFFF:
        return b"\xff" * 6
    return b"\x02\x00" + ip.packed[-4:]


class _Framer:
    def __init__(self, src: str, dst: str, ttl: int, ident: int):
        self.src = ipaddress.ip_address(src)
        self.dst = ipaddress.ip_address(dst)
        self.ttl = ttl
        self.ident = ident

    def _ip(self, proto: int, l4: bytes) -> bytes:
        if self.src.version == 4:
            self.ident = (self.ident + 1) & 0xFFFF
            hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(l4), self.ident, 0x4000, self.ttl, proto, 0,
                              self.src.packed, self.dst.packed)
            hdr = hdr[:10] + struct.pack("!H", _checksum(hdr)) + hdr[12:]
            eth = _mac_for(self.dst) + _mac_for(self.src) + b"\x08\x00"
            return eth + hdr + l4
        hdr = struct.pack("!IHBB16s16s", 6 << 28, len(l4), proto, self.ttl, self.src.packed, self.dst.packed)
        eth = _mac_for(self.dst) + _mac_for(self.src) + b"\x86\xdd"
        return eth + hdr + l4

    def _pseudo(self, proto: int, length: int) -> bytes:
        if self.src.version == 4:
            return self.src.packed + self.dst.packed + struct.pack("!BBH", 0, proto, length)
        return self.src.packed + self.dst.packed + struct.pack("!IxxxB", length, proto)

    def udp(self, sport: int, dport: int, payload: bytes) -> bytes:
        seg = struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload
        csum = _checksum(self._pseudo(17, len(seg)) + seg) or 0xFFFF
        return self._ip(17, seg[:6] + struct.pack("!H", csum) + seg[8:])

    def tcp(self, sport: int, dport: int, seq: int, ack: int, flags: int, payload: bytes = b"") -> bytes:
        seg = struct.pack("!HHIIBBHHH", sport, dport, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF, 5 << 4, flags, 65535, 0, 0)
        seg += payload
        csum = _checksum(self._pseudo(6, len(seg)) + seg)
        return self._ip(6, seg[:16] + struct.pack("!H", csum) + seg[18:])


SYN, ACK, PSH, FIN = 0x02, 0x10, 0x08, 0x01


def _split(data: bytes, spec: FlowSpec, salt: int) -> List[Tuple[int, bytes]]:
    """(offset, chunk) pieces of one application message according to the segmentation policy."""
    if spec.segmentation == "single" or len(data) <= 1:
        return [(0, data)]
    if spec.segmentation == "per_byte":
        return [(i, data[i : i + 1]) for i in range(len(data))]
    rnd = random.Random(spec.seed * 1_000_003 + salt)
    cuts = sorted(rnd.sample(range(1, len(data)), k=min(len(data) - 1, rnd.randint(1, 8))))
    bounds = [0, *cuts, len(data)]
    return [(a, data[a:b]) for a, b in zip(bounds, bounds[1:])]


def _resolve_ports(spec: FlowSpec, index: int) -> Tuple[int, int]:
    sport = spec.server_port or DEFAULT_SERVER_PORTS.get(spec.protocol, 9000)
    if spec.client_port:
        cport = spec.client_port
    elif spec.protocol == "DHCP":
        cport = 68
    elif spec.protocol == "NTP" and spec.params.get("symmetric_port"):
        cport = 123
    else:
        cport = 49152 + ((index * 7919 + spec.seed * 104729) % 16000)
    return cport, sport


def synth_flow(spec: FlowSpec, index: int = 0, start: Optional[float] = None) -> List[RawPacket]:
    """Render one FlowSpec as timestamped Ethernet frames."""
    spec.validate()
    cport, sport = _resolve_ports(spec, index)
    t0 = spec.start if spec.start is not None else (start if start is not None else float(BASE_TIME))
    client_ttl = int(spec.params.get("ttl", 64))
    server_ttl = int(spec.params.get("server_ttl", 60))
    cf = _Framer(spec.client, spec.server, client_ttl, 0x1000 + index * 64)
    server_src = spec.params.get("response_from", spec.server)
    sf = _Framer(server_src, spec.client, server_ttl, 0x8000 + index * 64)
    script = _script(spec)
    frames: List[bytes] = []

    if spec.is_tcp:
        rnd = random.Random(spec.seed + 17)
        cseq = rnd.getrandbits(32)
        sseq = rnd.getrandbits(32)
        frames.append(cf.tcp(cport, sport, cseq, 0, SYN))
        frames.append(sf.tcp(sport, cport, sseq, cseq + 1, SYN | ACK))
        frames.append(cf.tcp(cport, sport, cseq + 1, sseq + 1, ACK))
        cnext, snext = cseq + 1, sseq + 1
        for n, (direction, msg) in enumerate(script):
            pieces = _split(msg, spec, n)
            if spec.params.get("reorder") and len(pieces) > 1:
                random.Random(spec.seed * 31 + n).shuffle(pieces)
            if direction == "request":
                segs = [cf.tcp(cport, sport, cnext + off, snext, PSH | ACK, chunk) for off, chunk in pieces]
                if spec.params.get("retransmit") and len(pieces) > 1:
                    off, chunk = pieces[len(pieces) // 2]
                    segs.append(cf.tcp(cport, sport, cnext + off, snext, PSH | ACK, chunk))
                frames.extend(segs)
                cnext += len(msg)
                frames.append(sf.tcp(sport, cport, snext, cnext, ACK))
            else:
                frames.extend(sf.tcp(sport, cport, snext + off, cnext, PSH | ACK, chunk) for off, chunk in pieces)
                snext += len(msg)
                frames.append(cf.tcp(cport, sport, cnext, snext, ACK))
        frames.append(cf.tcp(cport, sport, cnext, snext, FIN | ACK))
        frames.append(sf.tcp(sport, cport, snext, cnext + 1, FIN | ACK))
        frames.append(cf.tcp(cport, sport, cnext + 1, snext + 1, ACK))
    else:
        for direction, msg in script:
            if direction == "request":
                frames.append(cf.udp(cport, sport, msg))
            else:
                frames.append(sf.udp(sport, cport, msg))

    out = []
    for i, frame in enumerate(frames):
        ts = t0 + i * PACKET_SPACING
        sec = int(ts)
        usec = int(round((ts - sec) * 1_000_000))
        if usec >= 1_000_000:
            sec, usec = sec + 1, usec - 1_000_000
        out.append(RawPacket(sec, usec, len(frame), len(frame), frame))
    return out


# --------------------------------------------------------------------------
# ground truth


def _expected_rules(spec: FlowSpec, categories: Dict[int, str]) -> List[str]:
    """Rules a correct auditor must raise for this spec, derived from the spec alone."""
    p = spec.params
    rules = set()
    if spec.protocol == "TLS":
        cv = _version_tuple(p.get("client_version", (3, 3)))
        if cv < (3, 3):
            rules.add("TLS.CLIENT_VERSION_DEPRECATED")
        if p.get("server_cipher") is not None:
            sv = _version_tuple(p.get("server_supported_version") or p.get("server_version", p.get("client_version", (3, 3))))
            if sv < (3, 3):
                rules.add("TLS.SERVER_VERSION_DEPRECATED")
            cat = categories.get(p["server_cipher"], "unknown")
            if cat in ("weak", "insecure", "unknown"):
                rules.add(f"TLS.SERVER_SELECTED_{cat.upper()}")
        cats = {categories.get(c, "unknown") for c in p["ciphers"]}
        if "weak" in cats:
            rules.add("TLS.CLIENT_OFFERS_WEAK")
        if "insecure" in cats:
            rules.add("TLS.CLIENT_OFFERS_INSECURE")
    elif spec.protocol == "HTTP":
        for ex in p.get("exchanges") or [p]:
            versions = [str(ex.get("version", "1.1"))]
            if ex.get("status") is not None or "status" not in ex:
                versions.append(str(ex.get("response_version", ex.get("version", "1.1") if ex.get("version") != "0.9" else "1.0")))
            if any(tuple(int(x) for x in v.split(".")) <= (1, 0) for v in versions):
                rules.add("HTTP.VERSION_OBSOLETE")
            auth = ex.get("auth")
            if auth:
                scheme = auth.get("scheme", "Basic").lower()
                if scheme == "basic":
                    rules.add("HTTP.BASIC_AUTH")
                if scheme != "digest":
                    rules.add("HTTP.PLAINTEXT_CREDENTIAL")
    elif spec.protocol == "NTP":
        v, m = p.get("version", 4), p.get("mode", 3)
        answered = p.get("answer", True)
        sv, sm = p.get("server_version", v), p.get("server_mode", 4)
        if v < 4:
            rules.add("NTP.CLIENT_OLD_VERSION")
        if answered and sv < 4:
            rules.add("NTP.SERVER_OLD_VERSION")
        if m != 3 or (answered and sm != 4):
            rules.add("NTP.BAD_MODES")
        if answered and p.get("org_zero", False):
            rules.add("NTP.ZERO_ORG")
    elif spec.protocol == "SSDP":
        kind = p.get("kind", "notify")
        if kind == "bare" or (kind == "notify" and not p.get("nts", "ssdp:alive")) or (
            kind == "msearch" and not p.get("st", "ssdp:discover")
        ):
            return ["SSDP.PARTIAL_MATCH"]
        if kind == "notify" and p.get("nts", "ssdp:alive") not in ("ssdp:alive", "ssdp:byebye", "ssdp:update", "upnp:propchange"):
            rules.add("SSDP.BAD_NTS")
        if kind == "msearch" and p.get("st", "ssdp:discover") != "ssdp:discover":
            rules.add("SSDP.BAD_ST")
        if kind in ("notify", "msearch") and ipaddress.ip_address(spec.server).is_multicast and p.get("ttl", 64) > 2:
            rules.add("SSDP.TTL_EXCESSIVE")
    return sorted(rules)


def _expected_confidence(spec: FlowSpec) -> Optional[str]:
    if spec.protocol == "NONE":
        return None
    if spec.protocol == "SSDP":
        p = spec.params
        kind = p.get("kind", "notify")
        if kind == "bare" or (kind == "notify" and not p.get("nts", "ssdp:alive")) or (
            kind == "msearch" and not p.get("st", "ssdp:discover")
        ):
            return "partial"
    return "full"


@dataclass
class GroundTruthEntry:
    index: int
    protocol: Optional[str]
    confidence: Optional[str]
    device: str
    client: str
    server: str
    transport: str
    port_hint_agreed: Optional[bool]
    expected_rules: List[str]
    attributes: Dict[str, Any] = field(default_factory=dict)


def _expected_attributes(spec: FlowSpec) -> Dict[str, Any]:
    p = spec.params
    if spec.protocol == "TLS":
        out = {
            "client_hello_version": list(_version_tuple(p.get("client_version", (3, 3)))),
            "client_cipher_suites": list(p["ciphers"]),
        }
        if p.get("server_cipher") is not None:
            out["server_selected_cipher"] = p["server_cipher"]
        return out
    if spec.protocol == "HTTP":
        ex = (p.get("exchanges") or [p])[0]
        out = {"method": ex.get("method", "GET"), "uri": ex.get("uri", "/")}
        if ex.get("auth"):
            out["auth_type"] = ex["auth"].get("scheme", "Basic").lower()
        return out
    if spec.protocol == "DNS":
        return {"query_names": [p.get("qname", "example.com")], "query_types": [p.get("qtype", 1)]}
    if spec.protocol == "NTP":
        return {"client_version": p.get("version", 4), "client_mode": p.get("mode", 3)}
    if spec.protocol == "DHCP":
        return {"message_type": p.get("message_type", 1), "parameter_request_list": list(p.get("params", (1, 3, 6, 15)))}
    if spec.protocol == "SSDP" and _expected_confidence(spec) == "full":
        return {"message_kind": p.get("kind", "notify"), "ip_ttl": p.get("ttl", 64)}
    return {}


_MODEL_PORTS = {
    "TLS": {("TCP", 443), ("TCP", 8443), ("TCP", 8883)},
    "HTTP": {("TCP", 80), ("TCP", 8008), ("TCP", 8080), ("TCP", 8888)},
    "DNS": {("UDP", 53), ("TCP", 53)},
    "NTP": {("UDP", 123)},
    "DHCP": {("UDP", 67), ("UDP", 68)},
    "SSDP": {("UDP", 1900)},
}


def ground_truth(spec: FlowSpec, index: int, categories: Dict[int, str]) -> GroundTruthEntry:
    cport, sport = _resolve_ports(spec, index)
    transport = "TCP" if spec.is_tcp else "UDP"
    proto = None if spec.protocol == "NONE" else spec.protocol
    hint = None if proto is None else (transport, sport) in _MODEL_PORTS[proto]
    return GroundTruthEntry(
        index=index,
        protocol=proto,
        confidence=_expected_confidence(spec),
        device=spec.device,
        client=f"{spec.client}:{cport}",
        server=f"{spec.server}:{sport}",
        transport=transport,
        port_hint_agreed=hint,
        expected_rules=_expected_rules(spec, categories),
        attributes=_expected_attributes(spec),
    )


def _load_categories(path: Union[str, Path, None]) -> Dict[int, str]:
    from .compliance import load_cipher_registry

    return dict(load_cipher_registry(path).categories)


def build_corpus(
    specs: Sequence[FlowSpec], registry_path: Union[str, Path, None] = None, spacing: float = PACKET_SPACING / 2
) -> Tuple[List[RawPacket], List[GroundTruthEntry]]:
    """Render and interleave flows by timestamp. Flow ``i`` starts at ``BASE_TIME + i * spacing``."""
    cats = _load_categories(registry_path)
    tagged = []
    truth = []
    keys = set()
    for i, spec in enumerate(specs):
        cport, sport = _resolve_ports(spec, i)
        key = (frozenset([(spec.client, cport), (spec.server, sport)]), spec.is_tcp)
        if key in keys:
            raise SpecError(f"flow {i} reuses the 5-tuple of an earlier flow")
        keys.add(key)
        pkts = synth_flow(spec, i, BASE_TIME + i * spacing)
        tagged.extend(((p.ts_sec, p.ts_frac), i, n, p) for n, p in enumerate(pkts))
        truth.append(ground_truth(spec, i, cats))
    tagged.sort(key=lambda t: t[:3])
    return [t[3] for t in tagged], truth


def synth_corpus(
    manifest: Sequence[FlowSpec], out: Union[str, Path], truth_path: Union[str, Path, None] = None,
    registry_path: Union[str, Path, None] = None,
) -> Tuple[Path, Path]:
    """Write the pcap and its ground truth (``<out>.truth.json`` unless given)."""
    out = Path(out)
    truth_path = Path(truth_path) if truth_path else out.with_suffix(".truth.json")
    packets, truth = build_corpus(manifest, registry_path)
    write_pcap(out, packets)
    truth_path.write_text(json.dumps([asdict(t) for t in truth], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out, truth_path


def load_manifest(path: Union[str, Path]) -> List[FlowSpec]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        doc = doc.get("flows", [])
    return [FlowSpec.from_dict(d) for d in doc]


def save_manifest(specs: Iterable[FlowSpec], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps({"flows": [s.to_dict() for s in specs]}, indent=2) + "\n", encoding="utf-8")


def load_ground_truth(path: Union[str, Path]) -> List[GroundTruthEntry]:
    return [GroundTruthEntry(**d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]


def device_map_lines(specs: Sequence[FlowSpec]) -> List[str]:
    seen = {}
    for s in specs:
        if s.device and s.client not in seen:
            seen[s.client] = s.device
    return [f"{dev},{ip}" for ip, dev in seen.items()]
