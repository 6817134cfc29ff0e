"""Apply protocol models to flows.

Detection is driven by payload content alone. A model's server ports only
set ``port_hint_agreed``, which matters for ranking when several models match.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence

from . import boolexpr
from .flows import COMBINED, DEFAULT_PAYLOAD_CAP, REQUEST, Flow, ordered_payload
from .model_schema import COMPARATORS, Matcher, ProtocolModel

FULL = "full"
PARTIAL = "partial"

PRINTABLE_WINDOW = 64
_PRINTABLE = frozenset(range(0x20, 0x7F)) | {0x09, 0x0A, 0x0D}


@dataclass(frozen=True)
class Detection:
    flow_index: int
    protocol: str
    matched_directions: FrozenSet[str]
    port_hint_agreed: bool
    traffic_mode_agreed: bool = False
    byte_specific: bool = False
    confidence: str = FULL

    def rank_key(self) -> tuple:
        return (
            self.confidence != FULL,
            not self.port_hint_agreed,
            not self.traffic_mode_agreed,
            not self.byte_specific,
            self.protocol,
        )

    def downgraded(self) -> "Detection":
        return replace(self, confidence=PARTIAL)


def printable_ratio(payload: bytes, window: int = PRINTABLE_WINDOW) -> float:
    head = payload[:window]
    if not head:
        return 0.0
    return sum(b in _PRINTABLE for b in head) / len(head)


def run_matcher(m: Matcher, payload: bytes, first_packet_len: Optional[int] = None) -> bool:
    """Test one matcher against a payload stream.

    ``first_packet_len`` feeds the ``payload_length`` metric; it defaults to
    the length of ``payload``. An empty payload never matches.
    """
    if not payload:
        return False
    if m.matcher_type == "string":
        return m.compiled().search(payload) is not None
    if m.matcher_type == "byte":
        for r in m.rules:
            end = r.offset + len(r.value)
            if len(payload) < end:
                return False
            window = payload[r.offset : end]
            if any((w & k) != (v & k) for w, v, k in zip(window, r.value, r.mask)):
                return False
        return True
    if m.matcher_type == "statistical":
        if m.metric == "printable_ratio":
            observed = printable_ratio(payload)
        else:
            observed = float(first_packet_len if first_packet_len is not None else len(payload))
        return COMPARATORS[m.comparator](observed, m.threshold)
    return False


def _responder_port(f: Flow) -> int:
    return f.server[1]


def port_hint(model: ProtocolModel, f: Flow) -> bool:
    return (f.key.ip_protocol, _responder_port(f)) in set(model.metadata.server_ports)


def traffic_mode_hint(model: ProtocolModel, f: Flow) -> bool:
    mode = model.metadata.traffic_mode
    if mode == "any":
        return False
    first = f.first_packet(REQUEST) or (f.packets[0][1] if f.packets else None)
    return first is not None and first.traffic_mode == mode


class FlowView:
    """Per-flow cache of reassembled direction payloads, shared across models."""

    def __init__(self, f: Flow, cap: int = DEFAULT_PAYLOAD_CAP):
        self.flow = f
        self.cap = cap
        self._payload: Dict[str, bytes] = {}

    def payload(self, direction: str) -> bytes:
        if direction not in self._payload:
            self._payload[direction] = ordered_payload(self.flow, direction, self.cap).data
        return self._payload[direction]

    def first_len(self, direction: str) -> Optional[int]:
        if direction == COMBINED:
            direction = self.flow.packets[0][0] if self.flow.packets else REQUEST
        for p in self.flow.direction_packets(direction):
            if p.payload:
                return len(p.payload)
        return None


def _direction_truth(model: ProtocolModel, view: FlowView) -> Dict[str, bool]:
    truth = {}
    for direction, sec in model.contents.sections.items():
        payload = view.payload(direction)
        if not sec.matchers and not sec.eval:
            truth[direction] = False
            continue
        first_len = view.first_len(direction)
        results = {m.id: run_matcher(m, payload, first_len) for m in sec.matchers}
        truth[direction] = boolexpr.eval_boolean(sec.effective_eval, results)
    return truth


def apply_model(model: ProtocolModel, f: Flow, view: Optional[FlowView] = None) -> Optional[Detection]:
    """Run one model over a flow; None when its select expression is false."""
    if not model.contents.sections:
        return None
    view = view or FlowView(f)
    truth = _direction_truth(model, view)
    if not boolexpr.eval_boolean(model.contents.effective_select, truth):
        return None
    matched = frozenset(d for d, ok in truth.items() if ok)
    if not matched:
        # select satisfied purely through negation; nothing in the payload agreed
        return None
    return Detection(
        flow_index=f.index,
        protocol=model.abbreviation,
        matched_directions=matched,
        port_hint_agreed=port_hint(model, f),
        traffic_mode_agreed=traffic_mode_hint(model, f),
        byte_specific=model.byte_specific,
    )


def rank(detections: Iterable[Detection]) -> List[Detection]:
    return sorted(detections, key=Detection.rank_key)


def detect_all(models: Sequence[ProtocolModel], f: Flow, cap: int = DEFAULT_PAYLOAD_CAP) -> List[Detection]:
    """All matching models for a flow, best first; the head is the primary label."""
    view = FlowView(f, cap)
    found = [d for d in (apply_model(m, f, view) for m in models) if d is not None]
    return rank(found)
