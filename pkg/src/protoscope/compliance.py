"""Best-practice audit of extracted protocol attributes."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Tuple, Union

from .attrs import (
    DhcpAttributes,
    DnsAttributes,
    HttpExchange,
    NtpAttributes,
    SsdpAttributes,
    TlsAttributes,
)
from .attrs.tls import version_name
from .matching import PARTIAL, Detection

VULNERABLE = "vulnerable"
CAUTION = "caution"
INFO = "info"
SEVERITIES = (VULNERABLE, CAUTION, INFO)

CATEGORIES = ("insecure", "weak", "secure", "recommended")
UNKNOWN = "unknown"

SHIPPED_REGISTRY = Path(__file__).parent / "data" / "cipher-categories.csv"

TLS12 = (3, 3)
SSDP_NTS_ALLOWED = ("ssdp:alive", "ssdp:byebye", "ssdp:update", "upnp:propchange")
SSDP_ST_DISCOVER = "ssdp:discover"
SSDP_MAX_TTL = 2


@dataclass(frozen=True)
class Rule:
    rule_id: str
    severity: str
    description: str
    weight: float = 1.0


_RULES = [
    Rule("TLS.CLIENT_VERSION_DEPRECATED", VULNERABLE, "client hello offers a TLS version below 1.2"),
    Rule("TLS.SERVER_VERSION_DEPRECATED", VULNERABLE, "server selected a TLS version below 1.2"),
    Rule("TLS.CLIENT_OFFERS_WEAK", CAUTION, "client offers at least one weak cipher suite"),
    Rule("TLS.CLIENT_OFFERS_INSECURE", VULNERABLE, "client offers at least one insecure cipher suite"),
    Rule("TLS.SERVER_SELECTED_WEAK", VULNERABLE, "server selected a weak cipher suite"),
    Rule("TLS.SERVER_SELECTED_INSECURE", VULNERABLE, "server selected an insecure cipher suite"),
    Rule("TLS.SERVER_SELECTED_UNKNOWN", INFO, "server selected a cipher suite absent from the registry"),
    Rule("HTTP.VERSION_OBSOLETE", VULNERABLE, "HTTP version 1.0 or older"),
    Rule("HTTP.BASIC_AUTH", VULNERABLE, "Basic authentication scheme"),
    Rule("HTTP.PLAINTEXT_CREDENTIAL", CAUTION, "credential sent without a digest scheme"),
    Rule("NTP.CLIENT_OLD_VERSION", VULNERABLE, "client NTP version older than 4"),
    Rule("NTP.SERVER_OLD_VERSION", VULNERABLE, "server NTP version older than 4", weight=0.5),
    Rule("NTP.BAD_MODES", CAUTION, "association modes other than client=3 / server=4"),
    Rule("NTP.ZERO_ORG", VULNERABLE, "server response carries a zero origin timestamp"),
    Rule("SSDP.BAD_NTS", CAUTION, "notification sub-type outside the allowed set"),
    Rule("SSDP.BAD_ST", CAUTION, "M-SEARCH search target is not ssdp:discover"),
    Rule("SSDP.TTL_EXCESSIVE", VULNERABLE, "multicast request sent with IP TTL above 2"),
]
_PARTIAL_PROTOCOLS = ("TLS", "HTTP", "DNS", "NTP", "DHCP", "SSDP")
_RULES += [Rule(f"{p}.PARTIAL_MATCH", INFO, "content signature matched but mandatory attributes are missing") for p in _PARTIAL_PROTOCOLS]

RULES: Dict[str, Rule] = {r.rule_id: r for r in _RULES}


@dataclass(frozen=True)
class ComplianceFinding:
    flow_index: int
    protocol: str
    rule_id: str
    severity: str
    detail: str
    evidence: Tuple[Tuple[str, Any], ...] = ()

    @property
    def weight(self) -> float:
        return RULES[self.rule_id].weight


def _finding(rule_id: str, detail: str, flow_index: int = -1, **evidence) -> ComplianceFinding:
    rule = RULES[rule_id]
    return ComplianceFinding(
        flow_index, rule_id.split(".")[0], rule_id, rule.severity, detail, tuple(sorted(evidence.items()))
    )


# --------------------------------------------------------------------------
# cipher registry


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class CipherRegistry:
    categories: Mapping[int, str]
    snapshot_date: str = ""

    def lookup(self, code: int) -> str:
        return self.categories.get(code, UNKNOWN)

    def counts(self) -> Dict[str, int]:
        out = {c: 0 for c in CATEGORIES}
        for cat in self.categories.values():
            out[cat] += 1
        return out

    def __len__(self) -> int:
        return len(self.categories)


_DATE = re.compile(r"snapshot\s*:\s*(\S+)", re.I)


def parse_cipher_registry(text: str) -> CipherRegistry:
    """Parse ``hex_code,category`` lines; ``#`` starts a comment."""
    table: Dict[int, str] = {}
    date = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        body, _, comment = line.partition("#")
        if comment and not date:
            m = _DATE.search(comment)
            if m:
                date = m.group(1)
        body = body.strip()
        if not body:
            continue
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 2:
            raise RegistryError(f"line {lineno}: expected 'hex_code,category'")
        try:
            code = int(parts[0], 16)
        except ValueError:
            raise RegistryError(f"line {lineno}: bad hex code {parts[0]!r}") from None
        cat = parts[1].lower()
        if cat not in CATEGORIES:
            raise RegistryError(f"line {lineno}: unknown category {parts[1]!r}")
        if table.get(code, cat) != cat:
            raise RegistryError(f"line {lineno}: code 0x{code:04x} listed as both {table[code]} and {cat}")
        table[code] = cat
    return CipherRegistry(table, date)


def load_cipher_registry(path: Union[str, Path, None] = None) -> CipherRegistry:
    path = Path(path) if path is not None else SHIPPED_REGISTRY
    return parse_cipher_registry(path.read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# per-protocol checks


def check_tls(a: TlsAttributes, r: CipherRegistry) -> List[ComplianceFinding]:
    out = []
    if a.client_hello_version < TLS12:
        out.append(_finding("TLS.CLIENT_VERSION_DEPRECATED", f"client hello offers {version_name(a.client_hello_version)}",
                            client_hello_version=version_name(a.client_hello_version)))
    if a.server_hello_version is not None and a.server_hello_version < TLS12:
        out.append(_finding("TLS.SERVER_VERSION_DEPRECATED", f"server selected {version_name(a.server_hello_version)}",
                            server_hello_version=version_name(a.server_hello_version)))
    offered = {c: r.lookup(c) for c in a.client_cipher_suites}
    weak = sorted(c for c, cat in offered.items() if cat == "weak")
    insecure = sorted(c for c, cat in offered.items() if cat == "insecure")
    if weak:
        out.append(_finding("TLS.CLIENT_OFFERS_WEAK", f"{len(weak)} of {len(offered)} offered codes are weak",
                            weak_codes=tuple(f"0x{c:04x}" for c in weak)))
    if insecure:
        out.append(_finding("TLS.CLIENT_OFFERS_INSECURE", f"{len(insecure)} of {len(offered)} offered codes are insecure",
                            insecure_codes=tuple(f"0x{c:04x}" for c in insecure)))
    if a.server_selected_cipher is not None:
        code = a.server_selected_cipher
        cat = r.lookup(code)
        rule = {"weak": "TLS.SERVER_SELECTED_WEAK", "insecure": "TLS.SERVER_SELECTED_INSECURE",
                UNKNOWN: "TLS.SERVER_SELECTED_UNKNOWN"}.get(cat)
        if rule:
            out.append(_finding(rule, f"server selected 0x{code:04x} ({cat})", server_selected_cipher=f"0x{code:04x}"))
    return out


def _vstr(v) -> str:
    return f"HTTP/{v[0]}.{v[1]}"


def check_http(e: HttpExchange) -> List[ComplianceFinding]:
    out = []
    old = [(side, v) for side, v in (("request", e.request_version), ("response", e.response_version))
           if v is not None and v <= (1, 0)]
    if old:
        detail = ", ".join(f"{side} uses {_vstr(v)}" for side, v in old)
        if any(v < (1, 0) for _, v in old):
            detail += " (HTTP/0.9 is deprecated)"
        out.append(_finding("HTTP.VERSION_OBSOLETE", detail, **{f"{side}_version": _vstr(v) for side, v in old}))
    if e.auth_type == "basic":
        out.append(_finding("HTTP.BASIC_AUTH", "Authorization uses the Basic scheme", auth_type=e.auth_type))
    if e.auth_credential and e.auth_type != "digest":
        out.append(_finding("HTTP.PLAINTEXT_CREDENTIAL", f"credential carried by the {e.auth_type} scheme",
                            auth_type=e.auth_type))
    return out


def check_ntp(a: NtpAttributes) -> List[ComplianceFinding]:
    out = []
    if a.client_version < 4:
        out.append(_finding("NTP.CLIENT_OLD_VERSION", f"client uses NTPv{a.client_version}", client_version=a.client_version))
    if a.server_version is not None and a.server_version < 4:
        out.append(_finding("NTP.SERVER_OLD_VERSION", f"server uses NTPv{a.server_version}", server_version=a.server_version))
    if a.client_mode != 3 or (a.server_mode is not None and a.server_mode != 4):
        out.append(_finding("NTP.BAD_MODES", f"modes client={a.client_mode} server={a.server_mode}",
                            client_mode=a.client_mode, server_mode=a.server_mode))
    if a.server_org_zero:
        out.append(_finding("NTP.ZERO_ORG", "server origin timestamp is zero", server_org_zero=True))
    return out


def check_ssdp(a: SsdpAttributes) -> List[ComplianceFinding]:
    out = []
    if a.message_kind == "notify" and a.nts not in SSDP_NTS_ALLOWED:
        out.append(_finding("SSDP.BAD_NTS", f"NTS {a.nts!r} is not an allowed sub-type", nts=a.nts))
    if a.message_kind == "msearch" and a.st != SSDP_ST_DISCOVER:
        out.append(_finding("SSDP.BAD_ST", f"ST {a.st!r} is not {SSDP_ST_DISCOVER}", st=a.st))
    if a.message_kind in ("notify", "msearch") and a.multicast and a.ip_ttl is not None and a.ip_ttl > SSDP_MAX_TTL:
        out.append(_finding("SSDP.TTL_EXCESSIVE", f"multicast request TTL {a.ip_ttl} > {SSDP_MAX_TTL}", ip_ttl=a.ip_ttl))
    return out


_ATTR_TYPES = {
    "TLS": TlsAttributes,
    "DNS": DnsAttributes,
    "NTP": NtpAttributes,
    "DHCP": DhcpAttributes,
    "SSDP": SsdpAttributes,
}


class InternalError(RuntimeError):
    pass


def check_flow(d: Detection, attrs: Any, r: CipherRegistry) -> List[ComplianceFinding]:
    """Dispatch to the protocol checker; a partial detection yields a single PARTIAL_MATCH."""
    if d.confidence == PARTIAL or attrs is None:
        rule_id = f"{d.protocol}.PARTIAL_MATCH"
        if rule_id not in RULES:
            return []
        return [_with_flow(_finding(rule_id, "signature matched but mandatory attributes are missing"), d.flow_index)]
    proto = d.protocol
    if proto == "HTTP":
        if not isinstance(attrs, list) or not all(isinstance(e, HttpExchange) for e in attrs):
            raise InternalError("HTTP detection requires a list of HttpExchange")
        found = [f for e in attrs for f in check_http(e)]
    else:
        expected = _ATTR_TYPES.get(proto)
        if expected is None:
            return []
        if not isinstance(attrs, expected):
            raise InternalError(f"{proto} detection paired with {type(attrs).__name__}")
        if proto == "TLS":
            found = check_tls(attrs, r)
        elif proto == "NTP":
            found = check_ntp(attrs)
        elif proto == "SSDP":
            found = check_ssdp(attrs)
        else:
            # DNS and DHCP: no best-practice rules registered yet
            found = []
    return [_with_flow(f, d.flow_index) for f in _dedupe(found)]


def _with_flow(f: ComplianceFinding, flow_index: int) -> ComplianceFinding:
    from dataclasses import replace

    return replace(f, flow_index=flow_index)


def _dedupe(findings: Iterable[ComplianceFinding]) -> List[ComplianceFinding]:
    seen = set()
    out = []
    for f in findings:
        key = (f.rule_id, f.detail)
        if key not in seen:
            seen.add(key)
            out.append(f)
    return out


def rule_ids(findings: Iterable[ComplianceFinding]) -> set:
    return {f.rule_id for f in findings}
