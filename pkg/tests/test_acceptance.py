"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL/SKIP line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary of any run that includes this file.
"""

from __future__ import annotations

import io
import math
import os
import random
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import pytest

from protoscope.analysis import analyze
from protoscope.attrs.tls import cipher_plot_value
from protoscope.boolexpr import eval_boolean
from protoscope.compliance import VULNERABLE, load_cipher_registry
from protoscope.fingerprint import fingerprint_distance, match_fingerprint
from protoscope.matching import FULL, PARTIAL
from protoscope.packet_io import RawPacket, iter_pcap, pcap_bytes, read_pcap, write_pcap
from protoscope.report import DeviceMap
from protoscope.synth import FlowSpec, build_corpus, synth_corpus

from corpora import two_device_specs
from test_boolexpr import gen_expr, oracle

RESULTS: list = []


@contextmanager
def criterion(n: int, label: str):
    """Record the outcome of one criterion; failures still propagate."""
    try:
        yield
    except pytest.skip.Exception as exc:
        _report(f"[SKIP] criterion {n}: {label} ({exc})")
        raise
    except BaseException as exc:
        _report(f"[FAIL] criterion {n}: {label} ({type(exc).__name__}: {exc})".splitlines()[0])
        raise
    else:
        _report(f"[PASS] criterion {n}: {label}")


def _report(line: str) -> None:
    RESULTS.append(line)
    print(line)


# ---------------------------------------------------------------------------
# 1. detection on standard and non-standard ports, with negatives

NEGATIVES = [
    ("ssh", 22, "TCP"), ("mqtt", 1883, "TCP"), ("smtp", 25, "TCP"), ("rtsp", 554, "TCP"),
    ("sip", 5060, "UDP"), ("coap", 5683, "UDP"), ("stun", 3478, "UDP"), ("zeros", 9999, "TCP"),
    ("telnet", 23, "TCP"), ("ftp", 21, "TCP"), ("redis", 6379, "TCP"), ("random", 443, "TCP"),
]

TLS_OK = {"ciphers": [0xC02B, 0xC02F, 0xC02C], "server_cipher": 0xC02B}
TLS_OLD = {"client_version": "TLS1.0", "ciphers": [0xC014, 0x002F, 0x0035], "server_cipher": 0x002F}
TLS_13 = {"ciphers": [0x1301, 0x1302, 0xC02B], "server_cipher": 0x1301, "server_supported_version": "TLS1.3",
          "extensions": [(43, 5), (51, 38)], "sni": "api.example.com"}


def detection_corpus():
    specs = []
    dev = lambda i: f"10.1.0.{10 + i % 5}"  # noqa: E731

    def add(proto, **kw):
        specs.append(FlowSpec(proto, client=kw.pop("client", dev(len(specs))), **kw))

    # TLS: standard ports, then the non-standard ports seen on real devices
    for n, port in enumerate((443, 443, 443, 8443, 8883)):
        add("TLS", server=f"52.1.0.{n}", server_port=port, params=[TLS_OK, TLS_OLD, TLS_13][n % 3])
    for n, port in enumerate((56700, 50443, 56700, 50443, 8883)):
        seg = ("single", "per_byte", "random")[n % 3]
        add("TLS", server=f"52.2.0.{n}", server_port=port, params=[TLS_OLD, TLS_OK][n % 2], segmentation=seg, seed=n)
    for n, port in enumerate((56700, 50443, 8883, 443)):
        add("TLS", server=f"52.2.1.{n}", server_port=port, segmentation="random", seed=40 + n,
            params=dict([TLS_13, TLS_OLD][n % 2], reorder=True, retransmit=True))
    add("TLS", client="2001:db8::10", server="2001:db8::443", server_port=443, params=TLS_OK)

    # HTTP
    for n, port in enumerate((80, 80, 8080, 8008, 8888)):
        add("HTTP", server=f"52.3.0.{n}", server_port=port,
            params={"uri": f"/api/v{n}", "host": "cloud.example", "user_agent": f"dev/{n}"})
    http_odd = (7888, 8080, 49152, 49153, 49154, 5000, 46380)
    for n, port in enumerate(http_odd):
        params = {"method": ("GET", "POST")[n % 2], "uri": f"/cgi/{n}", "version": ("1.1", "1.0")[n % 2]}
        if n % 3 == 0:
            params["auth"] = {"user": "admin", "password": "admin"}
        add("HTTP", server=f"52.4.0.{n}", server_port=port, params=params,
            segmentation=("single", "random", "per_byte")[n % 3], seed=n)
    add("HTTP", server="52.5.0.1", server_port=80,
        params={"exchanges": [{"uri": "/a"}, {"method": "POST", "uri": "/b", "request_body": 12}]})
    for n, port in enumerate((7888, 5000)):
        add("HTTP", server=f"52.5.1.{n}", server_port=port, segmentation="random", seed=60 + n,
            params={"uri": "/status", "reorder": True, "retransmit": True, "status": 401, "phrase": "Unauthorized"})
    add("HTTP", client="2001:db8::11", server="2001:db8::80", server_port=8080, params={"uri": "/v6"})

    # DNS
    for n, name in enumerate(("time.example", "cloud.example", "fw.example")):
        add("DNS", server="10.1.0.1", params={"qname": name, "qtype": (1, 28, 16)[n]}, seed=n)
    add("DNS", server="8.8.8.8", params={"qname": "nx.example", "rcode": 3})
    add("DNS", server="10.1.0.1", server_port=5300, params={"qname": "alt.example"})
    add("DNS", client="2001:db8::12", server="2001:db8::53")

    # NTP
    add("NTP", server="129.6.15.28")
    add("NTP", server="129.6.15.29", params={"version": 3})
    add("NTP", server="129.6.15.30", params={"symmetric_port": True, "org_zero": True})
    add("NTP", server="129.6.15.31", server_port=1123)
    add("NTP", server="129.6.15.32", params={"answer": False})

    # DHCP
    add("DHCP", client="0.0.0.0", server="255.255.255.255", params={"params": [1, 3, 6, 15, 28]})
    add("DHCP", client="0.0.0.0", server="255.255.255.255", client_port=6868, server_port=6767,
        params={"params": [1, 3, 6], "hostname": "plug-7"})
    add("DHCP", client="10.1.0.14", server="10.1.0.1", params={"message_type": 3, "params": [1, 3, 6, 42]})

    # SSDP
    add("SSDP", server="239.255.255.250", params={"ttl": 2})
    add("SSDP", server="239.255.255.250", params={"kind": "msearch", "ttl": 4})
    add("SSDP", server="239.255.255.250", server_port=1901, params={"ttl": 2, "nt": "urn:schemas-upnp-org:device:Basic:1"})
    add("SSDP", server="10.1.0.2", params={"kind": "response", "st": "upnp:rootdevice", "usn": "uuid:1::upnp:rootdevice"})
    add("SSDP", server="239.255.255.250", server_port=1901, params={"kind": "msearch", "ttl": 2, "st": "ssdp:discover"})

    for n, (kind, port, transport) in enumerate(NEGATIVES):
        add("NONE", server=f"52.9.0.{n}", server_port=port, transport=transport, params={"kind": kind}, seed=n)
    return specs


def test_criterion_1_detection_precision_recall_runtime(models, registry, tmp_path):
    with criterion(1, "full detections: precision 1.0, recall 1.0, runtime < 5 s, >= 60 flows"):
        specs = detection_corpus()
        pcap, _ = synth_corpus(specs, tmp_path / "c1.pcap")
        _, truth = build_corpus(specs)
        protos = {s.protocol for s in specs}
        assert len(specs) >= 60 and protos >= {"TLS", "HTTP", "DNS", "NTP", "DHCP", "SSDP", "NONE"}
        assert sum(s.protocol == "NONE" for s in specs) == 12
        assert any(t.port_hint_agreed is False for t in truth) and any(t.port_hint_agreed for t in truth)

        t0 = time.perf_counter()
        r = analyze(read_pcap(pcap), models, registry)
        elapsed = time.perf_counter() - t0
        assert len(r.flows) == len(specs)

        want = {(t.index, t.protocol) for t in truth if t.confidence == "full"}
        got = {(d.flow_index, d.protocol) for d in r.detections if d.confidence == FULL}
        tp = len(want & got)
        precision = tp / len(got) if got else 0.0
        recall = tp / len(want)
        print(f"    flows={len(specs)} tp={tp} fp={len(got - want)} fn={len(want - got)} "
              f"precision={precision:.3f} recall={recall:.3f} runtime={elapsed:.2f}s")
        assert precision == 1.0, sorted(got - want)
        assert recall == 1.0, sorted(want - got)
        assert elapsed < 5.0


# ---------------------------------------------------------------------------
# 2. degenerate SSDP


def test_criterion_2_bare_ssdp_partial(models, registry):
    with criterion(2, "bare NOTIFY: partial detection plus SSDP.PARTIAL_MATCH"):
        pkts, _ = build_corpus([FlowSpec("SSDP", server="239.255.255.250", params={"kind": "bare"})])
        r = analyze(pkts, models, registry)
        (d,) = r.detections
        assert (d.protocol, d.confidence) == ("SSDP", PARTIAL)
        assert [f.rule_id for f in r.findings] == ["SSDP.PARTIAL_MATCH"]


# ---------------------------------------------------------------------------
# 3. cipher plot value


def test_criterion_3_cipher_plot_value():
    with criterion(3, "log2 cipher plot: 0xC014 -> 15.59 +/- 0.005, 1000 codes within 1e-9 rel"):
        assert abs(cipher_plot_value(0xC014) - 15.59) <= 0.005
        rnd = random.Random(1000)
        worst = 0.0
        for _ in range(1000):
            code = rnd.randrange(2, 0x10000)
            ref = math.log(code) / math.log(2)  # change of base, not the library call under test
            worst = max(worst, abs(cipher_plot_value(code) - ref) / ref)
        print(f"    0xC014 -> {cipher_plot_value(0xC014):.6f}, worst relative error {worst:.2e}")
        assert worst <= 1e-9


# ---------------------------------------------------------------------------
# 4. rule coverage

SUBSET_REGISTRY = "0xc030,secure\n0x002f,weak\n0x0035,weak\n0xc02b,recommended\n"

RULE_FIXTURES = [
    ("TLS client v1.0", FlowSpec("TLS", params={"client_version": "TLS1.0", "ciphers": [0xC02B, 0xC02F],
                                               "server_cipher": 0xC02B, "server_version": "TLS1.2"}),
     None, {"TLS.CLIENT_VERSION_DEPRECATED"}),
    ("server selects 0x002F (subset registry)",
     FlowSpec("TLS", params={"ciphers": [0xC030, 0x002F, 0x0035], "server_cipher": 0x002F}),
     SUBSET_REGISTRY, {"TLS.CLIENT_OFFERS_WEAK", "TLS.SERVER_SELECTED_WEAK"}),
    ("HTTP/1.0", FlowSpec("HTTP", params={"version": "1.0"}), None, {"HTTP.VERSION_OBSOLETE"}),
    ("Basic auth", FlowSpec("HTTP", params={"auth": {"user": "admin", "password": "1234"}}), None,
     {"HTTP.BASIC_AUTH", "HTTP.PLAINTEXT_CREDENTIAL"}),
    ("NTP first byte 0x1B", FlowSpec("NTP", params={"version": 3, "mode": 3, "server_version": 4}), None, {"NTP.CLIENT_OLD_VERSION"}),
    ("NTP zero origin", FlowSpec("NTP", params={"org_zero": True}), None, {"NTP.ZERO_ORG"}),
    ("SSDP TTL 4", FlowSpec("SSDP", server="239.255.255.250", params={"kind": "msearch", "ttl": 4}), None,
     {"SSDP.TTL_EXCESSIVE"}),
    ("SSDP TTL 64", FlowSpec("SSDP", server="239.255.255.250", params={"ttl": 64}), None, {"SSDP.TTL_EXCESSIVE"}),
]

BEST_PRACTICE = [
    FlowSpec("TLS", server="52.6.0.1", params=TLS_OK),
    FlowSpec("TLS", server="52.6.0.2", params=TLS_13),
    FlowSpec("HTTP", server="52.6.0.3", params={"uri": "/ok", "host": "h.example"}),
    FlowSpec("DNS", server="10.0.0.1"),
    FlowSpec("NTP", server="129.6.15.28"),
    FlowSpec("DHCP", client="0.0.0.0", server="255.255.255.255"),
    FlowSpec("SSDP", server="239.255.255.250", params={"ttl": 2}),
    FlowSpec("SSDP", server="239.255.255.250", params={"kind": "msearch", "ttl": 1}),
]


def test_criterion_4_rule_coverage(models, tmp_path):
    with criterion(4, "rule fixtures fire exactly their rule ids; best practice has no vulnerable finding"):
        for label, spec, reg_text, expected in RULE_FIXTURES:
            reg_path = None
            if reg_text:
                reg_path = tmp_path / "subset.csv"
                reg_path.write_text(reg_text)
            pkts, (truth,) = build_corpus([spec], registry_path=reg_path)
            r = analyze(pkts, models, load_cipher_registry(reg_path))
            got = {f.rule_id for f in r.findings}
            print(f"    {label}: {sorted(got)}")
            assert got == expected, label
            assert set(truth.expected_rules) == expected, label
            if label.startswith("NTP first byte"):
                assert pkts[0].data[-48] == 0x1B  # client request payload is the 48-byte NTP header
        pkts, _ = build_corpus(BEST_PRACTICE)
        r = analyze(pkts, models, load_cipher_registry())
        assert len(r.detections) == len(BEST_PRACTICE)
        vulnerable = [f.rule_id for f in r.findings if f.severity == VULNERABLE]
        print(f"    best practice: {len(BEST_PRACTICE)} flows, vulnerable findings {vulnerable}")
        assert vulnerable == []


# ---------------------------------------------------------------------------
# 5. registry counts


def test_criterion_5_registry_counts(registry):
    with criterion(5, "cipher registry counts 92/196/32/28"):
        c = registry.counts()
        assert (c["insecure"], c["weak"], c["secure"], c["recommended"]) == (92, 196, 32, 28)


# ---------------------------------------------------------------------------
# 6. segmentation invariance


def test_criterion_6_segmentation_invariance(models, registry):
    with criterion(6, "TLS/HTTP attributes invariant under single, per-byte and 20 random segmentations"):
        bases = [
            FlowSpec("TLS", params=dict(TLS_13, client_version="TLS1.2")),
            FlowSpec("TLS", params=TLS_OLD),
            FlowSpec("HTTP", params={"method": "POST", "uri": "/upload?id=3", "host": "h.example",
                                     "user_agent": "cam/1.2", "auth": {"user": "u", "password": "p"},
                                     "request_body": 40, "server": "lighttpd"}),
        ]
        for base in bases:
            variants = [replace(base, segmentation="single"), replace(base, segmentation="per_byte")]
            variants += [replace(base, segmentation="random", seed=s) for s in range(20)]
            seen = set()
            for v in variants:
                pkts, _ = build_corpus([v])
                r = analyze(pkts, models, registry)
                (d,) = r.detections
                key = (d.protocol, d.confidence, repr(r.attributes[0]), tuple(sorted(f.rule_id for f in r.findings)))
                seen.add(key)
            assert len(seen) == 1, f"{base.protocol}: {len(seen)} distinct outcomes"


# ---------------------------------------------------------------------------
# 7. boolean expressions


def test_criterion_7_boolean_oracle():
    with criterion(7, "200 random expressions agree with the recursive oracle"):
        rnd = random.Random(7)
        names = ["a", "b", "c", "d"]
        checked = 0
        for _ in range(200):
            text, tree = gen_expr(rnd, 4, names)
            env = {n: rnd.random() < 0.5 for n in names}
            assert eval_boolean(text, env) == oracle(tree, env), text
            checked += 1
        assert checked == 200


# ---------------------------------------------------------------------------
# 8. pcap round trip


def test_criterion_8_pcap_round_trip(tmp_path):
    with criterion(8, "pcap round trip is bit-exact on 3 corpora including swapped byte order"):
        det, _ = build_corpus(detection_corpus())
        two, _ = build_corpus(two_device_specs())
        rnd = random.Random(8)
        cut = [RawPacket(p.ts_sec + rnd.randrange(100), rnd.randrange(1_000_000), min(60, p.captured_len),
                         p.original_len, p.data[:60]) for p in det[:40]]
        for name, pkts, endian in (("detection", det, "<"), ("two-device", two, ">"), ("truncated", cut, "<")):
            path = tmp_path / f"{name}.pcap"
            write_pcap(path, pkts, endian=endian)
            image = path.read_bytes()
            back = list(read_pcap(path))
            assert back == pkts, name
            assert pcap_bytes(back, endian=endian) == image, name
            assert list(iter_pcap(io.BytesIO(image))) == pkts, name
        assert (tmp_path / "two-device.pcap").read_bytes()[:4] == bytes.fromhex("a1b2c3d4")


# ---------------------------------------------------------------------------
# 9. fingerprints


FP_DEVICES = {
    "cam": ("10.4.0.1", [0xC014, 0x002F, 0x0035], "ipc/2.1", [1, 3, 6, 15]),
    "plug": ("10.4.0.2", [0xC02B, 0xC02F], "esp-http/1.0", [1, 3, 6]),
    "tv": ("10.4.0.3", [0x1301, 0x1302, 0xC02B, 0xC02F], "Tizen/5.0", [1, 3, 6, 12, 15, 28, 42]),
    "hub": ("10.4.0.4", [0xC02F, 0x009C, 0x002F], "okhttp/3.12", [1, 3, 6, 15, 119]),
}


def test_criterion_9_fingerprints(models, registry):
    with criterion(9, "4 devices: pairwise distance > 0, self match rank 1 with score 0"):
        specs = []
        for dev, (ip, ciphers, ua, plist) in FP_DEVICES.items():
            specs += [
                FlowSpec("TLS", client=ip, server="52.7.0.1", device=dev,
                         params={"ciphers": ciphers, "server_cipher": ciphers[0]}),
                FlowSpec("HTTP", client=ip, server="52.7.0.2", device=dev, params={"user_agent": ua, "uri": f"/{dev}"}),
                FlowSpec("DHCP", client=ip, server="10.4.0.254", device=dev, params={"params": plist, "message_type": 3}),
            ]
        devmap = DeviceMap.parse("".join(f"{d},{ip}\n" for d, (ip, *_rest) in FP_DEVICES.items()))
        pkts, _ = build_corpus(specs)
        r = analyze(pkts, models, registry, devmap)
        fps = r.fingerprints
        assert set(fps) == set(FP_DEVICES)
        names = sorted(fps)
        closest = min(fingerprint_distance(fps[a], fps[b]) for i, a in enumerate(names) for b in names[i + 1:])
        print(f"    smallest pairwise distance {closest:.3f}")
        assert closest > 0
        library = list(fps.values())
        for dev, fp in fps.items():
            best, score = match_fingerprint(fp, library)[0]
            assert (best, score) == (dev, 0.0)


# ---------------------------------------------------------------------------
# 10. real-world comparison (non-gating)

DATASET_ENV = "PROTOSCOPE_DATASET"


def test_criterion_10_real_dataset(models, registry):
    with criterion(10, "real-device dataset comparison (non-gating)"):
        root = os.environ.get(DATASET_ENV)
        if not root or not Path(root).is_dir():
            pytest.skip(f"set {DATASET_ENV} to a directory of <device>.pcap captures plus devices.csv")
        root = Path(root)
        devmap_path = root / "devices.csv"
        devmap = DeviceMap.load(devmap_path) if devmap_path.exists() else None
        for pcap in sorted(root.glob("*.pcap")):
            r = analyze(read_pcap(pcap), models, registry, devmap)
            counts: dict = {}
            for d in r.detections:
                key = (r.devices[d.flow_index], d.protocol)
                std, odd = counts.get(key, (0, 0))
                counts[key] = (std + 1, odd) if d.port_hint_agreed else (std, odd + 1)
            for (dev, proto), (std, odd) in sorted(counts.items()):
                print(f"    {pcap.name} {dev} {proto}: {std} [+{odd}]")
