"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import __version__
from .analysis import analyze, tls_cipher_lists
from .compliance import VULNERABLE, RegistryError, load_cipher_registry
from .fingerprint import build_fingerprint, fingerprint_to_document, load_library, match_fingerprint, save_fingerprint
from .flows import DEFAULT_FLOW_TIMEOUT
from .model_schema import ModelError, errors, load_model, load_models, validate_models
from .packet_io import PcapError, read_pcap
from .report import ConfigError, DeviceMap, aggregate, export, render_table, version_stamps

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--redact-credentials", action=argparse.BooleanOptionalAction, default=d(True),
                   help="hash HTTP credentials in outputs (default on)")
    p.add_argument("--flow-timeout", type=float, default=d(DEFAULT_FLOW_TIMEOUT), metavar="SECS")
    p.add_argument("--seed", type=int, default=d(0), help="offset added to every synth spec seed")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protoscope", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    models = sub.add_parser("models", help="protocol model utilities", parents=[common])
    msub = models.add_subparsers(dest="models_command", required=True)
    v = msub.add_parser("validate", help="validate every model in a directory", parents=[common])
    v.add_argument("directory")

    a = sub.add_parser("analyze", help="audit a pcap and report per device", parents=[common])
    a.add_argument("pcap")
    a.add_argument("--models", help="model directory (default: shipped models)")
    a.add_argument("--devices", help="device map file: lines 'device_id,ip_or_mac'")
    a.add_argument("--ciphers", help="cipher category CSV (default: shipped snapshot)")
    a.add_argument("--out", help="directory for report files and figures")
    a.add_argument("--format", choices=("json", "csv", "table"), default="table")
    a.add_argument("--fail-on-vulnerable", action="store_true")

    fp = sub.add_parser("fingerprint", help="device fingerprints", parents=[common])
    fsub = fp.add_subparsers(dest="fingerprint_command", required=True)
    b = fsub.add_parser("build", help="fingerprint every flow of a pcap as one device", parents=[common])
    b.add_argument("pcap")
    b.add_argument("--device", required=True)
    b.add_argument("--library", help="save into this directory instead of printing")
    b.add_argument("--models")
    m = fsub.add_parser("match", help="rank library devices against a pcap", parents=[common])
    m.add_argument("pcap")
    m.add_argument("--library", required=True)
    m.add_argument("--devices", help="match each mapped device separately")
    m.add_argument("--models")

    s = sub.add_parser("synth", help="generate a ground-truth corpus", parents=[common])
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="ground-truth path (default: <out>.truth.json)")
    return parser


class _WholeCapture:
    def __init__(self, device: str):
        self.device = device

    def lookup(self, ip: str, mac: str = "") -> str:
        return self.device


def _models(path: Optional[str]):
    return load_models(path) if path else load_models()


def cmd_models_validate(args) -> int:
    paths = sorted(Path(args.directory).glob("*.json"))
    if not paths:
        print(f"error: no model files in {args.directory}", file=sys.stderr)
        return EXIT_FAIL
    loaded, failed = [], False
    for p in paths:
        try:
            loaded.append(load_model(p))
        except ModelError as exc:
            failed = True
            diags = getattr(exc, "diagnostics", None)
            if diags:
                for d in diags:
                    print(f"{p.name}: {d}")
            else:
                print(f"{p.name}: error: {exc}")
    diags = validate_models(loaded)
    for d in diags:
        print(d)
    bad = failed or bool(errors(diags))
    print(f"{len(paths)} model(s), {'errors found' if bad else 'ok'}")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_analyze(args) -> int:
    models = _models(args.models)
    registry = load_cipher_registry(args.ciphers)
    devmap = DeviceMap.load(args.devices) if args.devices else None
    result = analyze(read_pcap(args.pcap), models, registry, devmap, args.flow_timeout, args.redact_credentials)
    report = aggregate(result.detections, result.findings, result.fingerprints, result.devices,
                       version_stamps(models, registry))
    rendered = {
        "json": export(report, "json").decode(),
        "csv": export(report, "csv").decode(),
        "table": render_table(report),
    }
    sys.stdout.write(rendered[args.format])
    if args.out:
        from .plotting import render_device_plots

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(rendered["json"], encoding="utf-8")
        (out / "report.csv").write_text(rendered["csv"], encoding="utf-8")
        (out / "report.txt").write_text(rendered["table"], encoding="utf-8")
        findings = [
            {"flow": f.flow_index, "device": result.devices.get(f.flow_index), "protocol": f.protocol,
             "rule_id": f.rule_id, "severity": f.severity, "detail": f.detail}
            for f in result.findings
        ]
        (out / "findings.json").write_text(json.dumps(findings, indent=2) + "\n", encoding="utf-8")
        render_device_plots(tls_cipher_lists(result), out)
    if args.fail_on_vulnerable and any(f.severity == VULNERABLE for f in result.findings):
        return EXIT_FAIL
    return EXIT_OK


def cmd_fingerprint_build(args) -> int:
    result = analyze(read_pcap(args.pcap), _models(args.models), load_cipher_registry(), _WholeCapture(args.device),
                     args.flow_timeout, args.redact_credentials)
    fp = result.fingerprints.get(args.device) or build_fingerprint(args.device, [])
    if args.library:
        print(save_fingerprint(fp, args.library))
    else:
        print(json.dumps(fingerprint_to_document(fp), indent=2))
    return EXIT_OK


def cmd_fingerprint_match(args) -> int:
    library = load_library(args.library)
    if not library:
        print(f"error: no fingerprints in {args.library}", file=sys.stderr)
        return EXIT_FAIL
    devmap = DeviceMap.load(args.devices) if args.devices else _WholeCapture("observed")
    result = analyze(read_pcap(args.pcap), _models(args.models), load_cipher_registry(), devmap,
                     args.flow_timeout, args.redact_credentials)
    if not result.fingerprints:
        print("no fingerprintable flows")
        return EXIT_FAIL
    for dev, fp in result.fingerprints.items():
        ranking = match_fingerprint(fp, library)
        print(f"{dev}:")
        for n, (cand, score) in enumerate(ranking, 1):
            print(f"  {n}. {cand}  {score:.4f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import device_map_lines, load_manifest, synth_corpus

    specs = load_manifest(args.manifest)
    if args.seed:
        specs = [replace(s, seed=s.seed + args.seed) for s in specs]
    pcap, truth = synth_corpus(specs, args.out, args.truth)
    lines = device_map_lines(specs)
    if lines:
        devmap = pcap.with_suffix(".devices.csv")
        devmap.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(devmap)
    print(pcap)
    print(truth)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "models":
        handler = cmd_models_validate
    elif args.command == "analyze":
        handler = cmd_analyze
    elif args.command == "fingerprint":
        handler = cmd_fingerprint_build if args.fingerprint_command == "build" else cmd_fingerprint_match
    else:
        handler = cmd_synth
    try:
        return handler(args)
    except (ConfigError, RegistryError) as exc:
        print(f"config-error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PcapError, ModelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
