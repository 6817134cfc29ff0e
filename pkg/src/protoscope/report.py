"""Per-device report documents, fixed-width tables and JSON/CSV export."""

from __future__ import annotations

import csv
import hashlib
import io
import ipaddress
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

from .compliance import CAUTION, RULES, VULNERABLE, CipherRegistry, ComplianceFinding
from .fingerprint import DeviceFingerprint, fingerprint_distance, UndefinedDistance
from .matching import Detection
from .model_schema import ProtocolModel, serialize_model

PROTOCOL_ORDER = ("TLS", "HTTP", "DNS", "NTP", "DHCP", "SSDP")
UNKNOWN_DEVICE = "unknown"

# Fingerprint dimensions relevant to each protocol column.
PROTOCOL_DIMENSIONS = {
    "TLS": ("tls_cipher_lists", "tls_extension_profiles"),
    "HTTP": ("http_methods", "http_hosts", "http_uris", "http_user_agents", "http_servers"),
    "DHCP": ("dhcp_param_lists",),
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# device map


def _norm_key(text: str) -> str:
    text = text.strip()
    try:
        return str(ipaddress.ip_address(text))
    except ValueError:
        pass
    mac = text.lower().replace("-", ":")
    parts = mac.split(":")
    if len(parts) == 6 and all(len(p) == 2 for p in parts):
        try:
            bytes.fromhex("".join(parts))
            return mac
        except ValueError:
            pass
    raise ConfigError(f"{text!r} is neither an IP nor a MAC address")


@dataclass
class DeviceMap:
    """device_id -> addresses, stored inverted for lookup."""

    owners: Dict[str, str] = field(default_factory=dict)

    def add(self, device_id: str, address: str) -> None:
        key = _norm_key(address)
        prev = self.owners.get(key)
        if prev is not None and prev != device_id:
            raise ConfigError(f"address {key} assigned to both {prev} and {device_id}")
        self.owners[key] = device_id

    def lookup(self, ip: str, mac: str = "") -> Optional[str]:
        if ip and ip in self.owners:
            return self.owners[ip]
        if mac:
            return self.owners.get(mac.lower())
        return None

    def devices(self) -> Dict[str, List[str]]:
        out: Dict[str, List[str]] = {}
        for addr, dev in sorted(self.owners.items()):
            out.setdefault(dev, []).append(addr)
        return out

    @classmethod
    def parse(cls, text: str) -> "DeviceMap":
        dm = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2 or not parts[0]:
                raise ConfigError(f"line {lineno}: expected 'device_id,ip_or_mac'")
            try:
                dm.add(parts[0], parts[1])
            except ConfigError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
        return dm

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DeviceMap":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# report document


@dataclass
class Cell:
    standard: int = 0
    nonstandard: int = 0
    findings: Dict[str, int] = field(default_factory=dict)
    vulnerable: bool = False
    secure: bool = True
    unique_fingerprint: Optional[bool] = None

    @property
    def total(self) -> int:
        return self.standard + self.nonstandard


@dataclass
class ReportDocument:
    devices: Dict[str, Dict[str, Cell]] = field(default_factory=dict)
    totals: Dict[str, Cell] = field(default_factory=dict)
    total_flows: int = 0
    versions: Dict[str, str] = field(default_factory=dict)

    def cell(self, device: str, protocol: str) -> Optional[Cell]:
        return self.devices.get(device, {}).get(protocol)

    def to_dict(self) -> dict:
        return {
            "devices": {d: {p: asdict(c) for p, c in sorted(row.items())} for d, row in sorted(self.devices.items())},
            "totals": {p: asdict(c) for p, c in sorted(self.totals.items())},
            "total_flows": self.total_flows,
            "versions": dict(sorted(self.versions.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReportDocument":
        return cls(
            devices={d: {p: Cell(**c) for p, c in row.items()} for d, row in doc["devices"].items()},
            totals={p: Cell(**c) for p, c in doc["totals"].items()},
            total_flows=doc["total_flows"],
            versions=dict(doc["versions"]),
        )


def version_stamps(models: Sequence[ProtocolModel] = (), registry: Optional[CipherRegistry] = None) -> Dict[str, str]:
    from . import __version__

    out = {"tool": __version__}
    if models:
        h = hashlib.sha256()
        for m in sorted(models, key=lambda m: m.abbreviation):
            h.update(serialize_model(m).encode())
        out["models"] = h.hexdigest()[:12]
    if registry is not None:
        h = hashlib.sha256(json.dumps(sorted(registry.categories.items())).encode())
        out["registry"] = f"{registry.snapshot_date or 'undated'}/{h.hexdigest()[:12]}"
    return out


def _project(fp: DeviceFingerprint, dims: Sequence[str]) -> DeviceFingerprint:
    return DeviceFingerprint(fp.device_id, **{d: fp.dimension(d) for d in dims})


def _unique(device: str, protocol: str, fingerprints: Mapping[str, DeviceFingerprint]) -> Optional[bool]:
    """True if this device's protocol fingerprint differs from every other device's in the run.

    None when there is nothing to compare against: no fingerprint dimensions
    for the protocol, or no other device with a populated fingerprint.
    """
    dims = PROTOCOL_DIMENSIONS.get(protocol)
    if dims is None or device not in fingerprints:
        return None
    mine = _project(fingerprints[device], dims)
    if mine.is_empty():
        return None
    compared = False
    for other, fp in fingerprints.items():
        if other == device:
            continue
        theirs = _project(fp, dims)
        if theirs.is_empty():
            continue
        compared = True
        try:
            if fingerprint_distance(mine, theirs) <= 0:
                return False
        except UndefinedDistance:
            continue
    return True if compared else None


def aggregate(
    detections: Iterable[Detection],
    findings: Iterable[ComplianceFinding],
    fingerprints: Mapping[str, DeviceFingerprint],
    devices: Mapping[int, str],
    versions: Optional[Mapping[str, str]] = None,
) -> ReportDocument:
    """Fold one run into per-device, per-protocol cells.

    ``devices`` maps flow index to device id, as attributed through a
    DeviceMap by initiator address; missing flows land under "unknown".
    """
    report = ReportDocument(versions=dict(versions or {}))
    for d in detections:
        dev = devices.get(d.flow_index, UNKNOWN_DEVICE)
        c = report.devices.setdefault(dev, {}).setdefault(d.protocol, Cell())
        if d.port_hint_agreed:
            c.standard += 1
        else:
            c.nonstandard += 1
        report.total_flows += 1
    det_proto = {d.flow_index: d.protocol for d in detections}
    for f in findings:
        dev = devices.get(f.flow_index, UNKNOWN_DEVICE)
        proto = det_proto.get(f.flow_index, f.protocol)
        c = report.devices.setdefault(dev, {}).setdefault(proto, Cell())
        c.findings[f.rule_id] = c.findings.get(f.rule_id, 0) + 1
        if f.severity == VULNERABLE:
            c.vulnerable = True
        if f.severity in (VULNERABLE, CAUTION):
            c.secure = False
    for dev, row in report.devices.items():
        for proto, c in row.items():
            c.findings = dict(sorted(c.findings.items()))
            c.unique_fingerprint = _unique(dev, proto, fingerprints)
            t = report.totals.setdefault(proto, Cell())
            t.standard += c.standard
            t.nonstandard += c.nonstandard
            for rid, n in c.findings.items():
                t.findings[rid] = t.findings.get(rid, 0) + n
            t.vulnerable = t.vulnerable or c.vulnerable
            t.secure = t.secure and c.secure
    for t in report.totals.values():
        t.findings = dict(sorted(t.findings.items()))
    return report


# --------------------------------------------------------------------------
# rendering


def cell_text(c: Optional[Cell]) -> str:
    """``647 [+179]`` plus marks: * unique fingerprint, ! vulnerable, ~ secure."""
    if c is None or c.total == 0:
        return "-"
    text = str(c.standard)
    if c.nonstandard:
        text += f" [+{c.nonstandard}]"
    marks = ("*" if c.unique_fingerprint else "") + ("!" if c.vulnerable else "") + ("~" if c.secure else "")
    return f"{text} {marks}" if marks else text


def _protocols(report: ReportDocument) -> List[str]:
    seen = {p for row in report.devices.values() for p in row} | set(report.totals)
    return list(PROTOCOL_ORDER) + sorted(seen - set(PROTOCOL_ORDER))


def render_table(report: ReportDocument) -> str:
    protos = _protocols(report)
    rows = [["device", *protos]]
    for dev in sorted(report.devices):
        rows.append([dev, *(cell_text(report.devices[dev].get(p)) for p in protos)])
    if report.devices:
        rows.append(["total", *(cell_text(report.totals.get(p)) for p in protos)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]

    def line(r):
        return "  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()

    out = [line(rows[0]), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows[1:]]
    notes = []
    for dev in sorted(report.devices):
        for p in protos:
            c = report.devices[dev].get(p)
            if c is not None and c.findings:
                listed = ", ".join(f"{rid} x{n}" for rid, n in c.findings.items())
                notes.append(f"  {dev} {p}: {listed}")
    if notes:
        out += ["", "findings:"] + notes
    if report.devices:
        out += ["", "marks: [+n] non-standard port flows, * unique fingerprint in this run, ! vulnerable, ~ secure"]
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# export


def export(report: ReportDocument, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["device", "protocol", "standard", "nonstandard", "unique_fingerprint", "vulnerable", "secure", "findings"])
        for dev in sorted(report.devices):
            for proto in _protocols(report):
                c = report.devices[dev].get(proto)
                if c is None or c.total == 0:
                    continue
                uf = "" if c.unique_fingerprint is None else str(c.unique_fingerprint).lower()
                fs = ";".join(f"{rid}={n}" for rid, n in c.findings.items())
                w.writerow([dev, proto, c.standard, c.nonstandard, uf, str(c.vulnerable).lower(), str(c.secure).lower(), fs])
        return buf.getvalue().encode("utf-8")
    raise ValueError(f"unknown export format {fmt!r}")


def import_json(data: Union[bytes, str]) -> ReportDocument:
    return ReportDocument.from_dict(json.loads(data))


def severity_of(rule_id: str) -> str:
    return RULES[rule_id].severity
