from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

from ..flows import REQUEST, RESPONSE, Flow, datagrams
from .base import ExtractionFailed

NTP_HEADER_LEN = 48
ORIGIN_OFFSET = 24


def split_first_byte(b: int) -> Tuple[int, int, int]:
    """(leap indicator, version, mode) from the LI:2|VN:3|Mode:3 byte."""
    return b >> 6, (b >> 3) & 0x07, b & 0x07


@dataclass(frozen=True)
class NtpAttributes:
    client_version: int
    client_mode: int
    server_version: Optional[int] = None
    server_mode: Optional[int] = None
    server_org_zero: Optional[bool] = None


def extract_ntp(f: Flow) -> NtpAttributes:
    req = datagrams(f, REQUEST)
    if not req or len(req[0]) < NTP_HEADER_LEN:
        raise ExtractionFailed("NTP request shorter than 48 bytes")
    _, cv, cm = split_first_byte(req[0][0])
    rsp = datagrams(f, RESPONSE)
    if not rsp:
        return NtpAttributes(cv, cm)
    if len(rsp[0]) < NTP_HEADER_LEN:
        raise ExtractionFailed("NTP response shorter than 48 bytes")
    _, sv, sm = split_first_byte(rsp[0][0])
    org = rsp[0][ORIGIN_OFFSET : ORIGIN_OFFSET + 8]
    return NtpAttributes(cv, cm, sv, sm, org == bytes(8))
