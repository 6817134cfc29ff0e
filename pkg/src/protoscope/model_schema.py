"""Protocol data-model documents: Info / Metadata / Contents.

A model is stored as one JSON document per protocol::

    {
      "info": {"abbreviation": "HTTP", "standard-name": ..., "description": ..., "source": "RFC 9112"},
      "metadata": {"ether-types": ["0x0800"], "traffic-mode": "unicast",
                   "server-ports": [{"ip-protocol": "TCP", "port": 80}]},
      "contents": {
        "request": {"matchers": [{"id": "m1", "matcher-type": "string",
                                  "matcher-pattern": {"regex": "^GET ", "flags": "i"}}],
                    "eval": "m1"},
        "select": "request"
      }
    }

The schema is closed: unknown keys are rejected.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from . import boolexpr
from .flows import DIRECTIONS

MATCHER_TYPES = ("string", "byte", "statistical")
TRAFFIC_MODES = ("unicast", "multicast", "broadcast", "any")
STAT_METRICS = ("printable_ratio", "payload_length")
COMPARATORS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}
IP_PROTOCOLS = {"TCP": 6, "UDP": 17}
_IP_PROTOCOL_NAMES = {v: k for k, v in IP_PROTOCOLS.items()}
_REGEX_FLAGS = {"i": re.IGNORECASE, "m": re.MULTILINE, "s": re.DOTALL, "x": re.VERBOSE}


class ModelError(ValueError):
    """Base class for model loading failures."""


class ParseError(ModelError):
    def __init__(self, message: str, source: str = "<doc>", line: int = 0, column: int = 0):
        super().__init__(f"{source}:{line}:{column}: {message}")
        self.source, self.line, self.column = source, line, column


class SchemaError(ModelError):
    def __init__(self, message: str, diagnostics: Optional[List["Diagnostic"]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


@dataclass(frozen=True)
class Info:
    abbreviation: str
    standard_name: str = ""
    description: str = ""
    source: str = ""


@dataclass(frozen=True)
class Metadata:
    ether_types: Tuple[int, ...] = ()
    traffic_mode: str = "any"
    server_ports: Tuple[Tuple[int, int], ...] = ()  # (ip_protocol, port)


@dataclass(frozen=True)
class ByteRule:
    offset: int
    value: bytes
    mask: bytes


@dataclass(frozen=True)
class Matcher:
    id: str
    matcher_type: str
    # string: regex + flags; byte: rules; statistical: metric/comparator/threshold
    regex: str = ""
    flags: str = ""
    rules: Tuple[ByteRule, ...] = ()
    metric: str = ""
    comparator: str = ""
    threshold: float = 0.0

    def compiled(self) -> "re.Pattern[bytes]":
        return _compile_regex(self.regex, self.flags)


@dataclass(frozen=True)
class Section:
    matchers: Tuple[Matcher, ...] = ()
    eval: str = ""

    @property
    def effective_eval(self) -> str:
        if self.eval:
            return self.eval
        return " AND ".join(m.id for m in self.matchers)


@dataclass(frozen=True)
class Contents:
    sections: Dict[str, Section] = field(default_factory=dict)
    select: str = ""

    @property
    def effective_select(self) -> str:
        if self.select:
            return self.select
        return " OR ".join(d for d in DIRECTIONS if d in self.sections)

    def __hash__(self) -> int:
        return hash((tuple(sorted(self.sections.items())), self.select))


@dataclass(frozen=True)
class ProtocolModel:
    info: Info
    metadata: Metadata = field(default_factory=Metadata)
    contents: Contents = field(default_factory=Contents)

    @property
    def abbreviation(self) -> str:
        return self.info.abbreviation

    @property
    def byte_specific(self) -> bool:
        """True when any matcher is a byte signature (ranked ahead of regex-only models)."""
        return any(m.matcher_type == "byte" for s in self.contents.sections.values() for m in s.matchers)


def _compile_regex(pattern: str, flags: str) -> "re.Pattern[bytes]":
    f = 0
    for ch in flags:
        f |= _REGEX_FLAGS[ch]
    return re.compile(pattern.encode("utf-8"), f)


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    model: str = ""

    def __str__(self) -> str:
        where = f"[{self.model}] " if self.model else ""
        return f"{self.severity}: {where}{self.code}: {self.message}"


def validate_model(m: ProtocolModel) -> List[Diagnostic]:
    """Check every model invariant; an empty list means the model is clean."""
    name = m.info.abbreviation
    out: List[Diagnostic] = []

    def err(code, msg):
        out.append(Diagnostic("error", code, msg, name))

    def warn(code, msg):
        out.append(Diagnostic("warning", code, msg, name))

    if not m.info.abbreviation.strip():
        err("info.abbreviation-empty", "abbreviation must be nonempty")

    md = m.metadata
    for et in md.ether_types:
        if not 0 <= et <= 0xFFFF:
            err("metadata.ether-type-range", f"ether type {et} is not a 16-bit code")
    if md.traffic_mode not in TRAFFIC_MODES:
        err("metadata.traffic-mode", f"unknown traffic mode {md.traffic_mode!r}")
    for proto, port in md.server_ports:
        if proto not in _IP_PROTOCOL_NAMES:
            err("metadata.ip-protocol", f"unsupported ip-protocol {proto}")
        if not 1 <= port <= 65535:
            err("metadata.port-range", f"port {port} outside 1-65535")
    if not md.server_ports:
        warn("metadata.no-server-ports", "port-agnostic only")

    sections = m.contents.sections
    for direction, sec in sections.items():
        if direction not in DIRECTIONS:
            err("contents.direction", f"unknown direction {direction!r}")
            continue
        ids = [mt.id for mt in sec.matchers]
        for dup in sorted({i for i in ids if ids.count(i) > 1}):
            err("matcher.duplicate-id", f"{direction}: matcher id {dup!r} is not unique")
        for mt in sec.matchers:
            out.extend(_check_matcher(mt, direction, name))
        if not sec.matchers and not sec.eval:
            warn("contents.empty-section", f"{direction}: section has no matchers")
            continue
        try:
            used = boolexpr.identifiers(sec.effective_eval)
        except boolexpr.ExpressionError as exc:
            err("eval.syntax", f"{direction}: {exc}")
            continue
        for ident in sorted(used - set(ids)):
            err("eval.undefined-id", f"{direction}: eval references undefined matcher {ident!r}")

    if sections:
        try:
            used = boolexpr.identifiers(m.contents.effective_select)
        except boolexpr.ExpressionError as exc:
            err("select.syntax", str(exc))
        else:
            for d in sorted(used):
                if d not in DIRECTIONS:
                    err("select.unknown-direction", f"select names unknown direction {d!r}")
                elif d not in sections:
                    err("select.missing-section", f"select names {d!r} but no such section is present")
    elif m.contents.select:
        err("select.missing-section", "select given without any contents section")
    return out


def _check_matcher(mt: Matcher, direction: str, model: str) -> List[Diagnostic]:
    out = []

    def err(code, msg):
        out.append(Diagnostic("error", code, f"{direction}/{mt.id}: {msg}", model))

    if not mt.id:
        err("matcher.id-empty", "matcher id must be nonempty")
    if mt.matcher_type not in MATCHER_TYPES:
        err("matcher.type", f"unknown matcher-type {mt.matcher_type!r}")
    elif mt.matcher_type == "string":
        bad = set(mt.flags) - set(_REGEX_FLAGS)
        if bad:
            err("matcher.regex-flags", f"unknown regex flags {''.join(sorted(bad))!r}")
        else:
            try:
                _compile_regex(mt.regex, mt.flags)
            except re.error as exc:
                err("matcher.regex-invalid", f"regex does not compile: {exc}")
    elif mt.matcher_type == "byte":
        if not mt.rules:
            err("matcher.byte-empty", "byte matcher needs at least one pattern entry")
        for r in mt.rules:
            if len(r.mask) != len(r.value):
                err("matcher.mask-length", f"mask length {len(r.mask)} != value length {len(r.value)} at offset {r.offset}")
            if r.offset < 0:
                err("matcher.offset", f"negative offset {r.offset}")
            if not r.value:
                err("matcher.byte-empty", f"empty value at offset {r.offset}")
    else:
        if mt.metric not in STAT_METRICS:
            err("matcher.stat-metric", f"unknown statistical metric {mt.metric!r}")
        if mt.comparator not in COMPARATORS:
            err("matcher.stat-comparator", f"unknown comparator {mt.comparator!r}")
    return out


def validate_models(models: Iterable[ProtocolModel]) -> List[Diagnostic]:
    """Validate a set of models, including cross-model uniqueness of abbreviations."""
    models = list(models)
    out: List[Diagnostic] = []
    seen: Dict[str, int] = {}
    for m in models:
        out.extend(validate_model(m))
        key = m.info.abbreviation.lower()
        seen[key] = seen.get(key, 0) + 1
    for key, n in sorted(seen.items()):
        if n > 1:
            out.append(Diagnostic("error", "info.duplicate-abbreviation", f"abbreviation {key!r} used by {n} models"))
    return out


def errors(diags: Iterable[Diagnostic]) -> List[Diagnostic]:
    return [d for d in diags if d.severity == "error"]


# --------------------------------------------------------------------------
# document <-> model


def _closed(obj: Any, allowed: Iterable[str], where: str, required: Iterable[str] = ()) -> Dict[str, Any]:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise SchemaError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise SchemaError(f"{where}: missing required field(s) {', '.join(missing)}")
    return obj


def _int16(v: Any, where: str) -> int:
    if isinstance(v, bool):
        raise SchemaError(f"{where}: expected integer code")
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        try:
            return int(v, 0)
        except ValueError:
            pass
    raise SchemaError(f"{where}: cannot read {v!r} as integer code")


def _hex(v: Any, where: str) -> bytes:
    if not isinstance(v, str):
        raise SchemaError(f"{where}: expected hex string")
    try:
        return bytes.fromhex(v.replace(" ", ""))
    except ValueError:
        raise SchemaError(f"{where}: invalid hex {v!r}") from None


def _str(v: Any, where: str) -> str:
    if not isinstance(v, str):
        raise SchemaError(f"{where}: expected string")
    return v


def _matcher_from_doc(d: Any, where: str) -> Matcher:
    d = _closed(d, ("id", "matcher-type", "matcher-pattern"), where, ("id", "matcher-type", "matcher-pattern"))
    mid = _str(d["id"], f"{where}.id")
    mtype = d["matcher-type"]
    pat = d["matcher-pattern"]
    where = f"{where}({mid})"
    if mtype == "string":
        p = _closed(pat, ("regex", "flags"), f"{where}.matcher-pattern", ("regex",))
        return Matcher(mid, mtype, regex=_str(p["regex"], where), flags=_str(p.get("flags", ""), where))
    if mtype == "byte":
        if not isinstance(pat, list):
            raise SchemaError(f"{where}.matcher-pattern: expected a list of byte entries")
        rules = []
        for i, e in enumerate(pat):
            e = _closed(e, ("offset", "value", "mask"), f"{where}.matcher-pattern[{i}]", ("offset", "value"))
            value = _hex(e["value"], where)
            mask = _hex(e["mask"], where) if "mask" in e else b"\xff" * len(value)
            off = e["offset"]
            if not isinstance(off, int) or isinstance(off, bool):
                raise SchemaError(f"{where}: offset must be a decimal integer")
            rules.append(ByteRule(off, value, mask))
        return Matcher(mid, mtype, rules=tuple(rules))
    if mtype == "statistical":
        p = _closed(pat, ("metric", "comparator", "threshold"), f"{where}.matcher-pattern", ("metric", "comparator", "threshold"))
        thr = p["threshold"]
        if not isinstance(thr, (int, float)) or isinstance(thr, bool):
            raise SchemaError(f"{where}: threshold must be numeric")
        return Matcher(mid, mtype, metric=_str(p["metric"], where), comparator=_str(p["comparator"], where), threshold=float(thr))
    raise SchemaError(f"{where}: unknown matcher-type {mtype!r}")


def model_from_document(doc: Any) -> ProtocolModel:
    doc = _closed(doc, ("info", "metadata", "contents"), "model", ("info",))
    info_d = _closed(doc["info"], ("abbreviation", "standard-name", "description", "source"), "info", ("abbreviation",))
    info = Info(
        abbreviation=_str(info_d["abbreviation"], "info.abbreviation"),
        standard_name=_str(info_d.get("standard-name", ""), "info.standard-name"),
        description=_str(info_d.get("description", ""), "info.description"),
        source=_str(info_d.get("source", ""), "info.source"),
    )
    md_d = _closed(doc.get("metadata", {}), ("ether-types", "traffic-mode", "server-ports"), "metadata")
    ports = []
    for i, sp in enumerate(md_d.get("server-ports", [])):
        sp = _closed(sp, ("ip-protocol", "port"), f"metadata.server-ports[{i}]", ("ip-protocol", "port"))
        proto = sp["ip-protocol"]
        if isinstance(proto, str):
            if proto.upper() not in IP_PROTOCOLS:
                raise SchemaError(f"metadata.server-ports[{i}]: unknown ip-protocol {proto!r}")
            proto = IP_PROTOCOLS[proto.upper()]
        ports.append((_int16(proto, "ip-protocol"), _int16(sp["port"], "port")))
    metadata = Metadata(
        ether_types=tuple(_int16(e, "metadata.ether-types") for e in md_d.get("ether-types", [])),
        traffic_mode=_str(md_d.get("traffic-mode", "any"), "metadata.traffic-mode"),
        server_ports=tuple(ports),
    )
    c_d = _closed(doc.get("contents", {}), (*DIRECTIONS, "select"), "contents")
    sections = {}
    for direction in DIRECTIONS:
        if direction not in c_d:
            continue
        s = _closed(c_d[direction], ("matchers", "eval"), f"contents.{direction}")
        matchers = s.get("matchers", [])
        if not isinstance(matchers, list):
            raise SchemaError(f"contents.{direction}.matchers: expected a list")
        sections[direction] = Section(
            matchers=tuple(_matcher_from_doc(md, f"contents.{direction}.matchers[{i}]") for i, md in enumerate(matchers)),
            eval=_str(s.get("eval", ""), f"contents.{direction}.eval"),
        )
    contents = Contents(sections=sections, select=_str(c_d.get("select", ""), "contents.select"))
    return ProtocolModel(info, metadata, contents)


def parse_model(text: Union[str, bytes], source: str = "<doc>") -> ProtocolModel:
    """Parse and validate one model document.

    Raises ParseError (with line/column) on malformed JSON and SchemaError on
    unknown fields, unknown matcher types or any error-severity diagnostic.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, source, exc.lineno, exc.colno) from None
    model = model_from_document(doc)
    errs = errors(validate_model(model))
    if errs:
        raise SchemaError("; ".join(str(d) for d in errs), errs)
    return model


def _matcher_to_doc(m: Matcher) -> Dict[str, Any]:
    if m.matcher_type == "string":
        pat: Any = {"regex": m.regex}
        if m.flags:
            pat["flags"] = m.flags
    elif m.matcher_type == "byte":
        pat = [{"offset": r.offset, "value": r.value.hex(), "mask": r.mask.hex()} for r in m.rules]
    else:
        pat = {"metric": m.metric, "comparator": m.comparator, "threshold": m.threshold}
    return {"id": m.id, "matcher-type": m.matcher_type, "matcher-pattern": pat}


def model_to_document(m: ProtocolModel) -> Dict[str, Any]:
    contents: Dict[str, Any] = {}
    for direction in DIRECTIONS:
        sec = m.contents.sections.get(direction)
        if sec is None:
            continue
        body: Dict[str, Any] = {"matchers": [_matcher_to_doc(x) for x in sec.matchers]}
        if sec.eval:
            body["eval"] = sec.eval
        contents[direction] = body
    if m.contents.select:
        contents["select"] = m.contents.select
    return {
        "info": {
            "abbreviation": m.info.abbreviation,
            "standard-name": m.info.standard_name,
            "description": m.info.description,
            "source": m.info.source,
        },
        "metadata": {
            "ether-types": [f"0x{e:04x}" for e in m.metadata.ether_types],
            "traffic-mode": m.metadata.traffic_mode,
            "server-ports": [
                {"ip-protocol": _IP_PROTOCOL_NAMES.get(p, p), "port": port} for p, port in m.metadata.server_ports
            ],
        },
        "contents": contents,
    }


def serialize_model(m: ProtocolModel) -> str:
    return json.dumps(model_to_document(m), indent=2) + "\n"


def load_model(path: Union[str, Path]) -> ProtocolModel:
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), source=str(path))


def load_models(directory: Union[str, Path, None] = None) -> List[ProtocolModel]:
    """Load every ``*.json`` model in ``directory`` (default: the shipped models)."""
    directory = Path(directory) if directory is not None else SHIPPED_MODELS
    models = [load_model(p) for p in sorted(directory.glob("*.json"))]
    errs = errors(validate_models(models))
    if errs:
        raise SchemaError("; ".join(str(d) for d in errs), errs)
    return models


SHIPPED_MODELS = Path(__file__).with_name("models")
