from __future__ import annotations

import json
from dataclasses import replace

import pytest

from protoscope.model_schema import (
    SHIPPED_MODELS,
    ByteRule,
    Contents,
    Info,
    Matcher,
    Metadata,
    ParseError,
    ProtocolModel,
    SchemaError,
    Section,
    errors,
    load_models,
    model_from_document,
    model_to_document,
    parse_model,
    serialize_model,
    validate_model,
    validate_models,
)


def codes(diags):
    return {d.code for d in diags}


def minimal(abbrev="X", **contents):
    return {"info": {"abbreviation": abbrev}, **({"contents": contents} if contents else {})}


def test_shipped_http_model_ports():
    m = parse_model((SHIPPED_MODELS / "http.json").read_text())
    assert m.abbreviation == "HTTP"
    assert {(6, 80), (6, 8008), (6, 8080), (6, 8888)} <= set(m.metadata.server_ports)


def test_minimal_info_only_model():
    m = parse_model(json.dumps(minimal()))
    assert m.abbreviation == "X"
    assert m.metadata.server_ports == ()
    assert m.contents.sections == {}
    assert not errors(validate_model(m))


def test_eval_referencing_undefined_id_is_schema_error():
    doc = minimal(request={"matchers": [{"id": "m1", "matcher-type": "string", "matcher-pattern": {"regex": "a"}}],
                           "eval": "m1 AND m9"})
    with pytest.raises(SchemaError) as exc:
        parse_model(json.dumps(doc))
    assert "eval.undefined-id" in codes(exc.value.diagnostics)


def test_syntax_error_has_location():
    with pytest.raises(ParseError) as exc:
        parse_model('{"info": {"abbreviation": "X",}\n}')
    assert exc.value.line == 1
    assert exc.value.column > 0


def test_unknown_matcher_type_is_schema_error():
    doc = minimal(request={"matchers": [{"id": "m1", "matcher-type": "fuzzy", "matcher-pattern": {}}]})
    with pytest.raises(SchemaError):
        parse_model(json.dumps(doc))


@pytest.mark.parametrize("path", [("info", "abbrev"), ("metadata", "traffic"), ("contents", "selector")])
def test_closed_schema_rejects_unknown_fields(path):
    doc = minimal()
    doc.setdefault(path[0], {})[path[1]] = 1
    with pytest.raises(SchemaError):
        parse_model(json.dumps(doc))


def test_misspelled_pattern_key_rejected():
    doc = minimal(request={"matchers": [{"id": "m1", "matcher-type": "string", "mactcher-pattern": {"regex": "a"}}]})
    with pytest.raises(SchemaError):
        parse_model(json.dumps(doc))


def test_shipped_models_validate_clean():
    ms = load_models()
    assert sorted(m.abbreviation for m in ms) == ["DHCP", "DNS", "HTTP", "NTP", "SSDP", "TLS"]
    assert errors(validate_models(ms)) == []


def test_duplicate_abbreviation_is_error():
    ms = load_models()
    assert "info.duplicate-abbreviation" in codes(errors(validate_models(ms + ms[:1])))


def _model(*matchers, eval_="", select="", server_ports=((6, 1),), mode="any", ether=(0x0800,)):
    return ProtocolModel(
        Info("T"),
        Metadata(ether_types=ether, traffic_mode=mode, server_ports=server_ports),
        Contents({"request": Section(tuple(matchers), eval_)}, select),
    )


def test_mask_shorter_than_value():
    m = _model(Matcher("m1", "byte", rules=(ByteRule(0, b"\x16\x03", b"\xff"),)))
    assert "matcher.mask-length" in codes(errors(validate_model(m)))


def test_empty_server_ports_warning():
    m = _model(Matcher("m1", "string", regex="a"), server_ports=())
    diags = validate_model(m)
    assert not errors(diags)
    (w,) = [d for d in diags if d.code == "metadata.no-server-ports"]
    assert w.severity == "warning"
    assert "port-agnostic only" in w.message


# one diagnostic code per invariant
INVARIANT_CASES = [
    ("info.abbreviation-empty", lambda: replace(_model(), info=Info(""))),
    ("metadata.ether-type-range", lambda: _model(ether=(0x1_0000,))),
    ("metadata.traffic-mode", lambda: _model(mode="anycast")),
    ("metadata.ip-protocol", lambda: _model(server_ports=((1, 80),))),
    ("metadata.port-range", lambda: _model(server_ports=((6, 0),))),
    ("matcher.duplicate-id", lambda: _model(Matcher("m1", "string", regex="a"), Matcher("m1", "string", regex="b"))),
    ("matcher.id-empty", lambda: _model(Matcher("", "string", regex="a"))),
    ("matcher.type", lambda: _model(Matcher("m1", "fuzzy"))),
    ("matcher.regex-flags", lambda: _model(Matcher("m1", "string", regex="a", flags="q"))),
    ("matcher.regex-invalid", lambda: _model(Matcher("m1", "string", regex="(a"))),
    ("matcher.byte-empty", lambda: _model(Matcher("m1", "byte", rules=()))),
    ("matcher.mask-length", lambda: _model(Matcher("m1", "byte", rules=(ByteRule(0, b"\x01", b""),)))),
    ("matcher.offset", lambda: _model(Matcher("m1", "byte", rules=(ByteRule(-1, b"\x01", b"\xff"),)))),
    ("matcher.stat-metric", lambda: _model(Matcher("m1", "statistical", metric="entropy", comparator=">", threshold=1))),
    ("matcher.stat-comparator", lambda: _model(Matcher("m1", "statistical", metric="payload_length", comparator="~", threshold=1))),
    ("eval.syntax", lambda: _model(Matcher("m1", "string", regex="a"), eval_="m1 AND")),
    ("eval.undefined-id", lambda: _model(Matcher("m1", "string", regex="a"), eval_="m2")),
    ("select.syntax", lambda: _model(Matcher("m1", "string", regex="a"), select="(request")),
    ("select.unknown-direction", lambda: _model(Matcher("m1", "string", regex="a"), select="upstream")),
    ("select.missing-section", lambda: _model(Matcher("m1", "string", regex="a"), select="response")),
]


@pytest.mark.parametrize("code,build", INVARIANT_CASES, ids=[c for c, _ in INVARIANT_CASES])
def test_each_invariant_has_a_diagnostic(code, build):
    assert code in codes(errors(validate_model(build())))


def test_valid_baseline_model_has_no_errors():
    assert errors(validate_model(_model(Matcher("m1", "string", regex="a"), eval_="m1", select="request"))) == []


def test_unknown_direction_section_rejected():
    doc = minimal(upstream={"matchers": []})
    with pytest.raises(SchemaError):
        model_from_document(doc)


def test_round_trip_shipped_models():
    for m in load_models():
        again = parse_model(serialize_model(m))
        assert again == m
        assert model_to_document(again) == model_to_document(m)


def test_defaults_for_eval_and_select():
    doc = minimal(request={"matchers": [{"id": "a", "matcher-type": "string", "matcher-pattern": {"regex": "x"}},
                                        {"id": "b", "matcher-type": "string", "matcher-pattern": {"regex": "y"}}]},
                  response={"matchers": [{"id": "c", "matcher-type": "string", "matcher-pattern": {"regex": "z"}}]})
    m = parse_model(json.dumps(doc))
    assert m.contents.sections["request"].effective_eval.replace("(", "").replace(")", "") == "a AND b"
    assert set(m.contents.effective_select.split(" OR ")) == {"request", "response"}


def test_byte_mask_defaults_to_all_ones():
    doc = minimal(request={"matchers": [{"id": "a", "matcher-type": "byte", "matcher-pattern": [{"offset": 0, "value": "1603"}]}]})
    m = parse_model(json.dumps(doc))
    assert m.contents.sections["request"].matchers[0].rules[0].mask == b"\xff\xff"
