"""End-to-end pipeline: decode, assemble, detect, extract, audit, fingerprint."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .attrs import ExtractionFailed, extract
from .compliance import CipherRegistry, ComplianceFinding, check_flow
from .fingerprint import DeviceFingerprint, build_fingerprint
from .flows import DEFAULT_FLOW_TIMEOUT, DEFAULT_PAYLOAD_CAP, REQUEST, Flow, assemble
from .matching import FULL, Detection, detect_all, rank
from .model_schema import ProtocolModel
from .packet_io import DecodeStats, RawPacket, decode_stream

log = logging.getLogger(__name__)

UNKNOWN_DEVICE = "unknown"


@dataclass
class AnalysisResult:
    flows: List[Flow]
    detections: List[Detection]  # primary label per detected flow
    candidates: Dict[int, List[Detection]]  # every ranked candidate, after downgrades
    attributes: Dict[int, Any]
    findings: List[ComplianceFinding]
    devices: Dict[int, str]  # flow index -> device id
    fingerprints: Dict[str, DeviceFingerprint] = field(default_factory=dict)
    stats: DecodeStats = field(default_factory=DecodeStats)

    def detection_for(self, flow_index: int) -> Optional[Detection]:
        for d in self.detections:
            if d.flow_index == flow_index:
                return d
        return None


def initiator_keys(f: Flow) -> Tuple[str, str]:
    """(ip, mac) of the flow initiator; mac is empty if unknown."""
    ip, _ = f.client
    first = f.first_packet(REQUEST)
    return str(ip), (first.src_mac if first is not None and first.src_mac else "")


def label_flow(
    models: Sequence[ProtocolModel], f: Flow, redact_credentials: bool = True, cap: int = DEFAULT_PAYLOAD_CAP
) -> Tuple[List[Detection], Dict[str, Any]]:
    """Detect and extract. Candidates whose extraction fails drop to partial and the list is re-ranked."""
    cands = detect_all(models, f, cap)
    attrs: Dict[str, Any] = {}
    out = []
    for d in cands:
        try:
            attrs[d.protocol] = extract(d.protocol, f, redact_credentials=redact_credentials)
            out.append(d)
        except ExtractionFailed as exc:
            log.debug("flow %d: %s extraction failed: %s", f.index, d.protocol, exc)
            out.append(d.downgraded())
        except KeyError:
            out.append(d)  # no extractor registered: keep the content-only label
    return rank(out), attrs


def analyze(
    raws: Iterable[RawPacket],
    models: Sequence[ProtocolModel],
    registry: CipherRegistry,
    device_of: Optional[Any] = None,
    flow_timeout: float = DEFAULT_FLOW_TIMEOUT,
    redact_credentials: bool = True,
    cap: int = DEFAULT_PAYLOAD_CAP,
) -> AnalysisResult:
    """Run the whole pipeline over raw records.

    ``device_of`` maps (ip, mac) to a device id; any object with a
    ``lookup(ip, mac)`` method works, and None sends every flow to "unknown".
    """
    stats = DecodeStats()
    packets = [p for p in decode_stream(raws, stats) if p.has_ports]
    flows = assemble(packets, flow_timeout)
    detections: List[Detection] = []
    candidates: Dict[int, List[Detection]] = {}
    attributes: Dict[int, Any] = {}
    findings: List[ComplianceFinding] = []
    devices: Dict[int, str] = {}
    bundles: Dict[str, List[Any]] = {}

    for f in flows:
        ip, mac = initiator_keys(f)
        device = device_of.lookup(ip, mac) if device_of is not None else None
        devices[f.index] = device or UNKNOWN_DEVICE
        ranked, attrs = label_flow(models, f, redact_credentials, cap)
        if not ranked:
            continue
        candidates[f.index] = ranked
        primary = ranked[0]
        detections.append(primary)
        bundle = attrs.get(primary.protocol) if primary.confidence == FULL else None
        if bundle is not None:
            attributes[f.index] = bundle
            bundles.setdefault(devices[f.index], []).append(bundle)
        findings.extend(check_flow(primary, bundle, registry))

    # "unknown" pools unrelated hosts, so it gets no fingerprint
    fingerprints = {}
    for dev, bs in sorted(bundles.items()):
        fp = build_fingerprint(dev, bs)
        if dev != UNKNOWN_DEVICE and not fp.is_empty():
            fingerprints[dev] = fp
    return AnalysisResult(flows, detections, candidates, attributes, findings, devices, fingerprints, stats)


def tls_cipher_lists(result: AnalysisResult) -> Dict[str, List[Tuple[int, ...]]]:
    """Distinct offered cipher lists per device, in first-seen order."""
    from .attrs import TlsAttributes

    out: Dict[str, List[Tuple[int, ...]]] = {}
    for idx, bundle in sorted(result.attributes.items()):
        if isinstance(bundle, TlsAttributes):
            lists = out.setdefault(result.devices[idx], [])
            codes = tuple(bundle.client_cipher_suites)
            if codes not in lists:
                lists.append(codes)
    return out


def summarize_findings(findings: Iterable[ComplianceFinding]) -> Mapping[str, int]:
    counts: Dict[str, int] = {}
    for f in findings:
        counts[f.rule_id] = counts.get(f.rule_id, 0) + 1
    return dict(sorted(counts.items()))
