"""``tracer-token`` command line.

Exit codes: 0 success, 1 usage (including missing files), 2 validation,
3 integrity (unparseable scenario, corrupt transcript).
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path

import yaml

from . import analysis
from .authority import (
    ProviderKeypair,
    build_diagnosis_key_set,
    fingerprint,
    sign,
    verify_bytes,
)
from .crypto import ROLLING_PERIOD, SubnetworkSalt
from .sim import Scenario, ScenarioError, Transcript, TranscriptIntegrityError, run
from .token import TokenState

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_INTEGRITY = 0, 1, 2, 3

DEFAULT_REGISTRY = "registry.json"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(records: list[dict], fmt: str, human: str) -> None:
    if fmt == "records":
        for r in records:
            print(json.dumps(r, sort_keys=True, separators=(",", ":")))
    else:
        print(human, end="")


def _read_scenario(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_USAGE, f"scenario file not found: {path}")
    try:
        return yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise CliError(EXIT_INTEGRITY, f"cannot parse scenario {path}: {exc}") from exc


def _parse_salt_flags(flags: list[str]) -> dict[str, str]:
    out = {}
    for flag in flags:
        label, sep, hx = flag.partition("=")
        if not sep or not label:
            raise CliError(EXIT_USAGE, f"--salt expects LABEL=HEX, got {flag!r}")
        out[label] = hx
    return out


def cmd_run(args) -> int:
    raw = _read_scenario(args.scenario)
    if isinstance(raw, dict):
        if args.seed is not None:
            raw = {**raw, "seed": args.seed}
        if args.salt:
            raw = {**raw, "salts": {**(raw.get("salts") or {}), **_parse_salt_flags(args.salt)}}
    try:
        scenario = Scenario.from_dict(raw)
    except ScenarioError as exc:
        for field, msg in exc.errors:
            print(f"error: {field}: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    tr = run(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tr.write(out / "transcript.jsonl")
    records = analysis.report_records(tr)
    human = analysis.render_report(tr)
    (out / "report.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records),
        encoding="utf-8",
    )
    (out / "report.txt").write_text(human, encoding="utf-8")
    _emit([{"table": "run", "transcript": str(out / "transcript.jsonl"),
            "config_hash": scenario.config_hash()}] + records, args.format, human)
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.transcript)
    if not path.is_file():
        raise CliError(EXIT_USAGE, f"transcript not found: {path}")
    try:
        tr = Transcript.load(path)
    except TranscriptIntegrityError as exc:
        raise CliError(EXIT_INTEGRITY, f"integrity error in {path}: {exc}") from exc
    _emit(analysis.report_records(tr), args.format, analysis.render_report(tr))
    return EXIT_OK


def cmd_keygen(args) -> int:
    kp = ProviderKeypair.generate()
    priv = Path(args.out)
    priv.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(priv, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(kp.private_pem())
    pub = priv.with_name(priv.name + ".pub")
    pub.write_text(kp.public_key.hex() + "\n", encoding="utf-8")
    print(json.dumps({"private": str(priv), "public": str(pub), "fingerprint": kp.fingerprint}))
    return EXIT_OK


def load_public_key(path: str | Path) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_USAGE, f"key file not found: {p}")
    data = p.read_bytes()
    if data.lstrip().startswith(b"-----BEGIN"):
        try:
            return ProviderKeypair.from_private_pem(data).public_key
        except ValueError as exc:
            raise CliError(EXIT_VALIDATION, f"{p}: {exc}") from exc
    try:
        key = bytes.fromhex(data.decode("ascii").strip())
    except (UnicodeDecodeError, ValueError):
        raise CliError(EXIT_VALIDATION, f"{p}: not a hex public key or PEM private key") from None
    if len(key) != 32:
        raise CliError(EXIT_VALIDATION, f"{p}: public key must be 32 bytes")
    return key


def load_registry(path: str | Path) -> list[bytes]:
    p = Path(path)
    if not p.exists():
        return []
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
        return [bytes.fromhex(k["public_key"]) for k in doc["keys"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_INTEGRITY, f"corrupt registry {p}: {exc}") from exc


def save_registry(path: str | Path, keys: list[bytes]) -> None:
    doc = {"version": 1, "keys": [{"fingerprint": fingerprint(k), "public_key": k.hex()} for k in keys]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def cmd_registry(args) -> int:
    keys = load_registry(args.registry)
    if args.action == "add":
        key = load_public_key(args.key)
        if key in keys:
            print(f"notice: key {fingerprint(key)} already registered", file=sys.stderr)
        else:
            keys.append(key)
            save_registry(args.registry, keys)
            print(json.dumps({"added": fingerprint(key)}))
        return EXIT_OK
    for k in keys:
        print(fingerprint(k) if args.format == "human" else json.dumps({"fingerprint": fingerprint(k)}))
    return EXIT_OK


def cmd_sign(args) -> int:
    """Sign the key set of a demo token that has been alive ``--days`` days."""
    key_path = Path(args.key)
    if not key_path.is_file():
        raise CliError(EXIT_USAGE, f"key file not found: {key_path}")
    kp = ProviderKeypair.from_private_pem(key_path.read_bytes())
    salts = _parse_salt_flags(args.salt) if args.salt else {}
    label = next(iter(salts), "COVID-19")
    salt = (SubnetworkSalt(label, bytes.fromhex(salts[label])) if salts
            else SubnetworkSalt.for_label(label))
    rng = random.Random(args.seed)
    token = TokenState.create(salt, 0, rng=rng).tick(max(args.days - 1, 0) * ROLLING_PERIOD)
    dk = sign(kp, build_diagnosis_key_set(token))
    Path(args.out).write_bytes(dk.encode())
    print(json.dumps({"out": args.out, "teks": len(dk.teks), "signer": kp.fingerprint}))
    return EXIT_OK


def cmd_verify(args) -> int:
    p = Path(args.dk)
    if not p.is_file():
        raise CliError(EXIT_USAGE, f"diagnosis key file not found: {p}")
    verdict = verify_bytes(load_registry(args.registry), p.read_bytes())
    if verdict:
        print(json.dumps({"verdict": "accept", "key": fingerprint(verdict.key)}))
        return EXIT_OK
    print(json.dumps({"verdict": "reject", "reason": verdict.reason.value}))
    return EXIT_VALIDATION


def cmd_acceptance(args) -> int:
    from . import acceptance

    outcomes = acceptance.run_all()
    for o in outcomes:
        if args.format == "records":
            print(json.dumps({"criterion": o.name, "passed": o.passed, "detail": o.detail,
                              "seconds": round(o.seconds, 3)}))
        else:
            print(o.line())
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracer-token", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def fmt(p):
        p.add_argument("--format", choices=("human", "records"), default="human")

    p = sub.add_parser("run", help="run a scenario and write transcript and reports")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--salt", action="append", metavar="LABEL=HEX", help="override a disease salt")
    fmt(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render tables from a transcript")
    p.add_argument("--transcript", required=True)
    fmt(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("keygen", help="generate a provider keypair")
    p.add_argument("--out", required=True, help="private key path; public key goes to PATH.pub")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("registry", help="manage the provider public-key registry")
    p.add_argument("--registry", default=DEFAULT_REGISTRY)
    rsub = p.add_subparsers(dest="action", required=True)
    ra = rsub.add_parser("add")
    ra.add_argument("--key", required=True)
    rl = rsub.add_parser("list")
    fmt(rl)
    p.set_defaults(func=cmd_registry)

    p = sub.add_parser("sign", help="sign a demo token's diagnosis key set")
    p.add_argument("--key", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--days", type=int, default=14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--salt", action="append", metavar="LABEL=HEX")
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("verify", help="verify a diagnosis key set file against the registry")
    p.add_argument("--registry", default=DEFAULT_REGISTRY)
    p.add_argument("--dk", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("acceptance", help="run the acceptance criteria")
    fmt(p)
    p.set_defaults(func=cmd_acceptance)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
