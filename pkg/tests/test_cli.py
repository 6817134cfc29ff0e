from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from protoscope.cli import main
from protoscope.model_schema import SHIPPED_MODELS
from protoscope.synth import FlowSpec, save_manifest, synth_corpus

from corpora import devmap_text, two_device_specs


@pytest.fixture()
def corpus(tmp_path):
    pcap, truth = synth_corpus(two_device_specs(), tmp_path / "c.pcap")
    devmap = tmp_path / "devices.csv"
    devmap.write_text(devmap_text())
    return pcap, devmap


def test_models_validate_shipped(capsys):
    assert main(["models", "validate", str(SHIPPED_MODELS)]) == 0
    assert "ok" in capsys.readouterr().out


def test_models_validate_broken(tmp_path, capsys):
    shutil.copy(SHIPPED_MODELS / "tls.json", tmp_path / "tls.json")
    (tmp_path / "bad.json").write_text('{"info": {"abbreviation": "B"}, "contents": {"request": '
                                       '{"matchers": [], "eval": "m1"}}}')
    assert main(["models", "validate", str(tmp_path)]) == 1
    assert "eval.undefined-id" in capsys.readouterr().out


def test_analyze_table_and_outputs(corpus, tmp_path, capsys):
    pcap, devmap = corpus
    out = tmp_path / "out"
    rc = main(["analyze", str(pcap), "--devices", str(devmap), "--models", str(SHIPPED_MODELS), "--out", str(out)])
    assert rc == 0
    assert "camera" in capsys.readouterr().out
    for name in ("report.json", "report.csv", "report.txt", "findings.json", "ciphers-camera.png", "ciphers-plug.png"):
        assert (out / name).stat().st_size > 0, name
    assert (out / "ciphers-camera.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    findings = json.loads((out / "findings.json").read_text())
    assert any(f["rule_id"] == "HTTP.BASIC_AUTH" and f["device"] == "camera" for f in findings)


def test_analyze_fail_on_vulnerable(corpus):
    pcap, devmap = corpus
    assert main(["analyze", str(pcap), "--devices", str(devmap), "--format", "json", "--fail-on-vulnerable"]) == 1


def test_analyze_clean_capture_passes_gate(tmp_path, capsys):
    pcap, _ = synth_corpus([FlowSpec("TLS", params={"ciphers": [0xC02B], "server_cipher": 0xC02B})], tmp_path / "ok.pcap")
    assert main(["analyze", str(pcap), "--format", "csv", "--fail-on-vulnerable"]) == 0
    assert capsys.readouterr().out.startswith("device,protocol")


def test_devmap_conflict_exit_code(corpus, tmp_path, capsys):
    pcap, _ = corpus
    bad = tmp_path / "bad.csv"
    bad.write_text("a,10.0.0.21\nb,10.0.0.21\n")
    assert main(["analyze", str(pcap), "--devices", str(bad)]) == 2
    assert "config-error" in capsys.readouterr().err


def test_bad_pcap_exit_code(tmp_path, capsys):
    p = tmp_path / "x.pcap"
    p.write_bytes(b"not a pcap at all, definitely not")
    assert main(["analyze", str(p)]) == 2


def test_fingerprint_build_and_match(tmp_path, capsys):
    lib = tmp_path / "lib"
    for dev, ciphers in (("alpha", [0xC02B]), ("beta", [0xC02F, 0x002F])):
        pcap, _ = synth_corpus([FlowSpec("TLS", params={"ciphers": ciphers})], tmp_path / f"{dev}.pcap")
        assert main(["fingerprint", "build", str(pcap), "--device", dev, "--library", str(lib)]) == 0
    assert sorted(p.name for p in lib.iterdir()) == ["alpha.json", "beta.json"]
    capsys.readouterr()
    assert main(["fingerprint", "match", str(tmp_path / "beta.pcap"), "--library", str(lib)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].split() == ["1.", "beta", "0.0000"]


def test_fingerprint_build_prints_json(tmp_path, capsys):
    pcap, _ = synth_corpus([FlowSpec("HTTP", params={"user_agent": "UA"})], tmp_path / "h.pcap")
    assert main(["fingerprint", "build", str(pcap), "--device", "d"]) == 0
    assert json.loads(capsys.readouterr().out)["http-user-agents"] == ["UA"]


def test_synth_command(tmp_path, capsys):
    manifest = tmp_path / "m.json"
    save_manifest(two_device_specs(), manifest)
    assert main(["synth", "--manifest", str(manifest), "--out", str(tmp_path / "s.pcap"), "--seed", "3"]) == 0
    assert (tmp_path / "s.truth.json").exists()
    assert (tmp_path / "s.devices.csv").read_text() == devmap_text()


def test_global_flags_before_and_after_subcommand(corpus):
    pcap, devmap = corpus
    assert main(["--flow-timeout", "10", "analyze", str(pcap), "--format", "json"]) == 0
    assert main(["analyze", str(pcap), "--no-redact-credentials", "--flow-timeout", "5", "--format", "json"]) == 0


def test_module_entry_point(corpus):
    pcap, _ = corpus
    proc = subprocess.run([sys.executable, "-m", "protoscope", "analyze", str(pcap), "--format", "csv"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("device,protocol")
