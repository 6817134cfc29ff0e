"""Per-device behavioral fingerprints and Jaccard-based matching."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
from urllib.parse import urlsplit

from .attrs import DhcpAttributes, HttpExchange, TlsAttributes

# Dimensions that enter the distance. tls_server_selected is kept out on
# purpose: it only breaks ties between devices sharing offered cipher lists.
DISTANCE_DIMENSIONS = (
    "tls_cipher_lists",
    "tls_extension_profiles",
    "http_methods",
    "http_hosts",
    "http_uris",
    "http_user_agents",
    "http_servers",
    "dhcp_param_lists",
)


class UndefinedDistance(ValueError):
    pass


@dataclass(frozen=True)
class DeviceFingerprint:
    device_id: str
    tls_cipher_lists: FrozenSet[Tuple[int, ...]] = frozenset()
    tls_extension_profiles: FrozenSet[Tuple[Tuple[int, ...], int]] = frozenset()
    tls_server_selected: FrozenSet[int] = frozenset()
    http_methods: FrozenSet[str] = frozenset()
    http_hosts: FrozenSet[str] = frozenset()
    http_uris: FrozenSet[str] = frozenset()
    http_user_agents: FrozenSet[str] = frozenset()
    http_servers: FrozenSet[str] = frozenset()
    dhcp_param_lists: FrozenSet[Tuple[int, ...]] = frozenset()

    def dimension(self, name: str) -> frozenset:
        return getattr(self, name)

    def is_empty(self) -> bool:
        return not any(getattr(self, f.name) for f in fields(self) if f.name != "device_id")

    def populated(self) -> List[str]:
        return [d for d in DISTANCE_DIMENSIONS if getattr(self, d)]


_NUMERIC = re.compile(r"^\d+$")


def normalize_uri(uri: str) -> str:
    """Replace numeric path segments and all query values with placeholders."""
    parts = urlsplit(uri)
    path = "/".join("{n}" if _NUMERIC.match(seg) else seg for seg in parts.path.split("/"))
    if parts.query:
        keys = [kv.split("=", 1)[0] for kv in parts.query.split("&") if kv]
        path += "?" + "&".join(f"{k}={{v}}" for k in keys)
    return path


def build_fingerprint(device_id: str, bundles: Iterable[object]) -> DeviceFingerprint:
    """Aggregate distinct attribute values from one device's flows."""
    acc: Dict[str, set] = {f.name: set() for f in fields(DeviceFingerprint) if f.name != "device_id"}
    for b in bundles:
        if isinstance(b, TlsAttributes):
            acc["tls_cipher_lists"].add(tuple(b.client_cipher_suites))
            acc["tls_extension_profiles"].add((tuple(t for t, _ in b.client_extensions), b.client_extensions_total))
            if b.server_selected_cipher is not None:
                acc["tls_server_selected"].add(b.server_selected_cipher)
        elif isinstance(b, HttpExchange) or (isinstance(b, list) and all(isinstance(e, HttpExchange) for e in b)):
            for e in b if isinstance(b, list) else [b]:
                if e.method:
                    acc["http_methods"].add(e.method)
                if e.host:
                    acc["http_hosts"].add(e.host)
                if e.uri:
                    acc["http_uris"].add(normalize_uri(e.uri))
                if e.user_agent:
                    acc["http_user_agents"].add(e.user_agent)
                if e.server_header:
                    acc["http_servers"].add(e.server_header)
        elif isinstance(b, DhcpAttributes):
            if b.parameter_request_list:
                acc["dhcp_param_lists"].add(tuple(b.parameter_request_list))
    return DeviceFingerprint(device_id, **{k: frozenset(v) for k, v in acc.items()})


def jaccard_distance(a: frozenset, b: frozenset) -> float:
    union = a | b
    if not union:
        return 0.0
    return 1.0 - len(a & b) / len(union)


def fingerprint_distance(
    a: DeviceFingerprint, b: DeviceFingerprint, weights: Optional[Mapping[str, float]] = None
) -> float:
    """Weighted mean Jaccard distance over dimensions populated in both fingerprints.

    Ordered lists count as single atoms. With no dimension in common the
    fingerprints share nothing and the distance is 1.
    """
    if a.is_empty() and b.is_empty():
        raise UndefinedDistance("both fingerprints are empty")
    shared = [d for d in DISTANCE_DIMENSIONS if a.dimension(d) and b.dimension(d)]
    if not shared:
        if not a.populated() and not b.populated():
            return jaccard_distance(a.tls_server_selected, b.tls_server_selected)
        return 1.0
    w = weights or {}
    total = sum(w.get(d, 1.0) for d in shared)
    return sum(w.get(d, 1.0) * jaccard_distance(a.dimension(d), b.dimension(d)) for d in shared) / total


def match_fingerprint(
    observed: DeviceFingerprint, library: Sequence[DeviceFingerprint], weights: Optional[Mapping[str, float]] = None
) -> List[Tuple[str, float]]:
    """Rank library devices by distance to ``observed`` (closest first)."""
    if not library:
        raise ValueError("fingerprint library is empty")
    scored = []
    for entry in library:
        try:
            score = fingerprint_distance(observed, entry, weights)
        except UndefinedDistance:
            score = 1.0
        overlap = len(observed.tls_server_selected & entry.tls_server_selected)
        scored.append((score, -overlap, entry.device_id))
    scored.sort()
    return [(device_id, score) for score, _, device_id in scored]


# --------------------------------------------------------------------------
# serialization


def _sorted_atoms(values) -> list:
    return sorted(values, key=lambda v: json.dumps(v, sort_keys=True))


def fingerprint_to_document(fp: DeviceFingerprint) -> dict:
    return {
        "device-id": fp.device_id,
        "tls-cipher-lists": _sorted_atoms([[f"0x{c:04x}" for c in lst] for lst in fp.tls_cipher_lists]),
        "tls-extension-profiles": _sorted_atoms(
            [{"types": list(types), "total-bytes": total} for types, total in fp.tls_extension_profiles]
        ),
        "tls-server-selected": [f"0x{c:04x}" for c in sorted(fp.tls_server_selected)],
        "http-methods": sorted(fp.http_methods),
        "http-hosts": sorted(fp.http_hosts),
        "http-uris": sorted(fp.http_uris),
        "http-user-agents": sorted(fp.http_user_agents),
        "http-servers": sorted(fp.http_servers),
        "dhcp-param-lists": _sorted_atoms([list(x) for x in fp.dhcp_param_lists]),
    }


def fingerprint_from_document(doc: dict) -> DeviceFingerprint:
    allowed = set(fingerprint_to_document(DeviceFingerprint("")))
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown fingerprint field(s): {', '.join(sorted(unknown))}")
    return DeviceFingerprint(
        device_id=doc["device-id"],
        tls_cipher_lists=frozenset(tuple(int(c, 16) for c in lst) for lst in doc.get("tls-cipher-lists", [])),
        tls_extension_profiles=frozenset(
            (tuple(p["types"]), int(p["total-bytes"])) for p in doc.get("tls-extension-profiles", [])
        ),
        tls_server_selected=frozenset(int(c, 16) for c in doc.get("tls-server-selected", [])),
        http_methods=frozenset(doc.get("http-methods", [])),
        http_hosts=frozenset(doc.get("http-hosts", [])),
        http_uris=frozenset(doc.get("http-uris", [])),
        http_user_agents=frozenset(doc.get("http-user-agents", [])),
        http_servers=frozenset(doc.get("http-servers", [])),
        dhcp_param_lists=frozenset(tuple(x) for x in doc.get("dhcp-param-lists", [])),
    )


def save_fingerprint(fp: DeviceFingerprint, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", fp.device_id) or "device"
    path = directory / f"{safe}.json"
    path.write_text(json.dumps(fingerprint_to_document(fp), indent=2) + "\n", encoding="utf-8")
    return path


def load_library(directory: Union[str, Path]) -> List[DeviceFingerprint]:
    return [
        fingerprint_from_document(json.loads(p.read_text(encoding="utf-8")))
        for p in sorted(Path(directory).glob("*.json"))
    ]
