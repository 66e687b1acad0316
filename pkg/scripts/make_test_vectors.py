#!/usr/bin/env python3
"""Generate the envelope known-answer vectors from the reference cipher.

Deliberately does NOT import rulevault: expected bytes come from the
standalone GCM reference plus the documented wire construction, so the
production encoder and every other-language implementation are checked
against an independent computation.

Usage: python scripts/make_test_vectors.py   (writes docs/test-vectors/envelope_kat.json)
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from base64 import b64encode

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
from gcm_reference import gcm_encrypt  # noqa: E402

ENVELOPE_VERSION = 1


def nonce_for(sender: str, counter: int) -> bytes:
    return hashlib.sha256(sender.encode("utf-8")).digest()[:4] + counter.to_bytes(8, "big")


def gcm_aad(kid: str, sid: str, topic: str) -> bytes:
    parts = [bytes([ENVELOPE_VERSION])]
    for chunk in (kid.encode("utf-8"), sid.encode("utf-8"), topic.encode("utf-8")):
        parts.append(len(chunk).to_bytes(2, "big"))
        parts.append(chunk)
    return b"".join(parts)


def envelope_json(kid: str, sid: str, nonce: bytes, ct_tag: bytes, topic: str) -> str:
    obj = {
        "v": ENVELOPE_VERSION,
        "kid": kid,
        "sid": sid,
        "n": b64encode(nonce).decode("ascii"),
        "ct": b64encode(ct_tag).decode("ascii"),
        "aad": b64encode(topic.encode("utf-8")).decode("ascii"),
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def _key(byte: int) -> bytes:
    return bytes([byte]) * 32


CASES = [
    # (name, key, key_id, sender, counter, plaintext, topic)
    ("empty-plaintext", _key(0x01), "dev-a", "dev-a", 0, b"", "evt/dev-a"),
    ("one-byte", _key(0x02), "dev-a", "dev-a", 1, b"\x00", "evt/dev-a"),
    ("fifteen-bytes", _key(0x03), "dev-b", "dev-b", 2, bytes(range(15)), "evt/dev-b"),
    ("one-block", _key(0x04), "dev-b", "dev-b", 3, bytes(range(16)), "evt/dev-b"),
    ("block-plus-one", _key(0x05), "dev-c", "dev-c", 4, bytes(range(17)), "evt/dev-c"),
    (
        "event-json",
        _key(0x10),
        "presence-1",
        "presence-1",
        0,
        json.dumps(
            {
                "device": "presence-1",
                "capability": "presenceSensor",
                "attribute": "presence",
                "value": "present",
                "timestamp": 1700000000000000,
            },
            separators=(",", ":"),
        ).encode(),
        "evt/presence-1",
    ),
    (
        "command-json",
        _key(0x11),
        "thermostat-1",
        "enclave-0",
        7,
        json.dumps(
            {
                "device": "thermostat-1",
                "capability": "thermostatMode",
                "command": "setMode",
                "arguments": ["cool"],
            },
            separators=(",", ":"),
        ).encode(),
        "cmd/thermostat-1",
    ),
    (
        "provisioning-topic",
        _key(0x12),
        "prov",
        "operator",
        0,
        b'[{"id":"r1"}]',
        "prov/rules",
    ),
    ("attest-topic", _key(0x13), "attest-channel", "keyserver", 0, b"\xaa" * 64, "attest/enclave-0"),
    ("large-counter", _key(0x14), "dev-z", "dev-z", 2**40, bytes(range(64)), "evt/dev-z"),
    ("high-bytes", _key(0x15), "dev-z", "dev-z", 9, bytes(range(192, 255)), "evt/dev-z"),
    ("four-hundred-bytes", _key(0x16), "dev-q", "dev-q", 10, bytes(i % 251 for i in range(400)), "evt/dev-q"),
]


def main() -> None:
    cases = []
    for name, key, kid, sender, counter, plaintext, topic in CASES:
        nonce = nonce_for(sender, counter)
        aad = gcm_aad(kid, sender, topic)
        ct_tag = gcm_encrypt(key, nonce, plaintext, aad)
        cases.append(
            {
                "name": name,
                "key_hex": key.hex(),
                "key_id": kid,
                "sender": sender,
                "counter": counter,
                "nonce_hex": nonce.hex(),
                "plaintext_hex": plaintext.hex(),
                "topic": topic,
                "gcm_aad_hex": aad.hex(),
                "ct_tag_hex": ct_tag.hex(),
                "envelope_json": envelope_json(kid, sender, nonce, ct_tag, topic),
            }
        )
    out = {
        "format": "rulevault envelope known-answer vectors v1",
        "notes": "expected values computed with the standalone GCM reference "
        "(tests/gcm_reference.py); see docs/wire-format.md for the construction",
        "cases": cases,
    }
    out_path = os.path.join(
        os.path.dirname(__file__), "..", "docs", "test-vectors", "envelope_kat.json"
    )
    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(cases)} cases to {out_path}")


if __name__ == "__main__":
    main()
