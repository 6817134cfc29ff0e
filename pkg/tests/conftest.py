from __future__ import annotations

import pytest

from protoscope.compliance import load_cipher_registry
from protoscope.model_schema import load_models
from protoscope.packet_io import RawPacket, decode_packet
from protoscope.synth import _Framer


def udp_raw(src, sport, dst, dport, payload, ts=0.0, ttl=64):
    frame = _Framer(src, dst, ttl, 1).udp(sport, dport, payload)
    sec = int(ts)
    return RawPacket(sec, int(round((ts - sec) * 1e6)), len(frame), len(frame), frame)


def tcp_raw(src, sport, dst, dport, seq, flags, payload=b"", ack=0, ts=0.0):
    frame = _Framer(src, dst, 64, 1).tcp(sport, dport, seq, ack, flags, payload)
    sec = int(ts)
    return RawPacket(sec, int(round((ts - sec) * 1e6)), len(frame), len(frame), frame)


def parsed(raws):
    return [decode_packet(r) for r in raws]


@pytest.fixture(scope="session")
def models():
    return load_models()


@pytest.fixture(scope="session")
def registry():
    return load_cipher_registry()


def tcp_conversation(messages, client=("10.0.0.2", 40000), server=("10.0.0.1", 80), split=None):
    """Flow from [(direction, bytes)]; ``split(data) -> [(offset, chunk)]`` controls segmentation."""
    from protoscope.flows import assemble

    split = split or (lambda d: [(0, d)])
    seq = {"request": 1000, "response": 5000}
    raws = [tcp_raw(*client, *server, 999, 0x02, ts=0.0), tcp_raw(*server, *client, 4999, 0x12, ts=0.0005)]
    t = 0.001
    for direction, data in messages:
        src, dst = (client, server) if direction == "request" else (server, client)
        for off, chunk in split(data):
            raws.append(tcp_raw(*src, *dst, seq[direction] + off, 0x18, chunk, ts=t))
            t += 0.001
        seq[direction] += len(data)
    (f,) = assemble(parsed(raws))
    return f


def udp_conversation(messages, client=("10.0.0.2", 40000), server=("10.0.0.1", 53), ttl=64):
    from protoscope.flows import assemble

    raws = []
    for n, (direction, data) in enumerate(messages):
        src, dst = (client, server) if direction == "request" else (server, client)
        raws.append(udp_raw(*src, *dst, data, ts=n * 0.001, ttl=ttl))
    (f,) = assemble(parsed(raws))
    return f


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
