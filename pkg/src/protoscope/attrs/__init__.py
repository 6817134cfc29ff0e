"""Per-protocol attribute extraction from detected flows."""

from __future__ import annotations

from typing import List, Union

from ..flows import Flow
from .base import ExtractionFailed
from .dhcp import DhcpAttributes, extract_dhcp
from .dns import DnsAttributes, extract_dns
from .http import HttpExchange, extract_http
from .ntp import NtpAttributes, extract_ntp
from .ssdp import SsdpAttributes, extract_ssdp
from .tls import TlsAttributes, cipher_plot_value, extract_tls

# HTTP yields one bundle holding every exchange of the flow.
AttributeBundle = Union[TlsAttributes, List[HttpExchange], DnsAttributes, NtpAttributes, DhcpAttributes, SsdpAttributes]

EXTRACTORS = {
    "TLS": extract_tls,
    "DNS": extract_dns,
    "NTP": extract_ntp,
    "DHCP": extract_dhcp,
    "SSDP": extract_ssdp,
}


def extract(protocol: str, f: Flow, redact_credentials: bool = True) -> AttributeBundle:
    """Run the extractor registered for ``protocol``.

    Raises ExtractionFailed when the flow lacks mandatory attributes and
    KeyError for protocols without an extractor.
    """
    if protocol == "HTTP":
        return extract_http(f, redact_credentials=redact_credentials)
    return EXTRACTORS[protocol](f)


__all__ = [
    "AttributeBundle",
    "DhcpAttributes",
    "DnsAttributes",
    "ExtractionFailed",
    "HttpExchange",
    "NtpAttributes",
    "SsdpAttributes",
    "TlsAttributes",
    "cipher_plot_value",
    "extract",
    "extract_dhcp",
    "extract_dns",
    "extract_http",
    "extract_ntp",
    "extract_ssdp",
    "extract_tls",
]
