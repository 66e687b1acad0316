"""Authenticated encryption envelopes and rule sealing.

All transit payloads ride in AES-256-GCM envelopes. The JSON wire encoding
is an interop contract (see docs/wire-format.md) and must stay byte-exact
across implementations:

    {"v":1,"kid":<key id>,"sid":<sender id>,"n":b64,"ct":b64,"aad":b64}

Keys appear in a fixed order, separators are compact, and base64 is the
standard alphabet with padding. The GCM additional-data input binds every
header field, not just the topic:

    gcm_aad = version byte || len16(kid) || kid || len16(sid) || sid
              || len16(aad) || aad

so flipping any bit of a serialized envelope fails authentication. Nonces
are never random: 4-byte sender salt (SHA-256 of the sender id, truncated)
followed by a 64-bit big-endian counter.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import threading
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import (
    AuthenticationError,
    BindingError,
    KeyMismatch,
    NonceExhausted,
    PayloadTooLarge,
    SchemaError,
)
from .model import Rule, check_device_id, parse_rule, rule_to_bytes

ENVELOPE_VERSION = 1
KEY_BYTES = 32
NONCE_BYTES = 12
TAG_BYTES = 16
MAX_PLAINTEXT = 1 << 20
_COUNTER_MAX = (1 << 64) - 1

SEAL_AAD_PREFIX = b"seal/"


@dataclass(frozen=True)
class SymmetricKey:
    """A 256-bit AES key with a short label used for wire-level key lookup."""

    secret: bytes
    key_id: str

    def __post_init__(self) -> None:
        if not isinstance(self.secret, bytes) or len(self.secret) != KEY_BYTES:
            raise SchemaError(f"key {self.key_id!r}: secret must be {KEY_BYTES} bytes")
        if not isinstance(self.key_id, str) or not self.key_id:
            raise SchemaError("key: key_id must be a non-empty string")

    def __repr__(self) -> str:  # never leak key bytes into logs
        return f"SymmetricKey(key_id={self.key_id!r}, secret=<{KEY_BYTES} bytes>)"


class NonceSequence:
    """Deterministic per-sender nonce source: salt(sender) || counter.

    Counter increments are atomic; the sequence never repeats a nonce and
    raises NonceExhausted when the 64-bit counter would wrap.
    """

    def __init__(self, sender: str, start: int = 0):
        self._salt = hashlib.sha256(sender.encode("utf-8")).digest()[:4]
        self._counter = start
        self._lock = threading.Lock()

    def next(self) -> bytes:
        with self._lock:
            if self._counter > _COUNTER_MAX:
                raise NonceExhausted("nonce counter wrapped; retire this key")
            value = self._counter
            self._counter += 1
        return self._salt + value.to_bytes(8, "big")


@dataclass(frozen=True)
class Envelope:
    """Authenticated ciphertext container for one transit payload."""

    version: int
    key_id: str
    sender: str
    nonce: bytes
    ciphertext_and_tag: bytes
    aad: bytes

    def __post_init__(self) -> None:
        if len(self.nonce) != NONCE_BYTES:
            raise SchemaError(f"envelope: nonce must be {NONCE_BYTES} bytes")
        if len(self.ciphertext_and_tag) < TAG_BYTES:
            raise SchemaError("envelope: ciphertext shorter than the auth tag")


def _gcm_aad(version: int, key_id: str, sender: str, aad: bytes) -> bytes:
    parts = [bytes([version])]
    for chunk in (key_id.encode("utf-8"), sender.encode("utf-8"), aad):
        if len(chunk) > 0xFFFF:
            raise PayloadTooLarge("envelope header field exceeds 65535 bytes")
        parts.append(len(chunk).to_bytes(2, "big"))
        parts.append(chunk)
    return b"".join(parts)


# Fallback nonce sequences for callers that do not manage their own,
# keyed by (key_id, sender) so repeat calls still never reuse a nonce.
_shared_sequences: dict[tuple[str, str], NonceSequence] = {}
_shared_lock = threading.Lock()


def _sequence_for(key: SymmetricKey, sender: str) -> NonceSequence:
    with _shared_lock:
        seq = _shared_sequences.get((key.key_id, sender))
        if seq is None:
            seq = NonceSequence(sender)
            _shared_sequences[(key.key_id, sender)] = seq
        return seq


def encrypt(
    key: SymmetricKey,
    plaintext: bytes,
    aad: bytes,
    sender: str,
    nonce_seq: NonceSequence | None = None,
) -> Envelope:
    """Encrypt plaintext into an Envelope bound to aad (the transport topic).

    Callers owning long-lived channels should pass their own NonceSequence;
    otherwise a shared per-(key, sender) sequence is used.
    """
    if len(plaintext) > MAX_PLAINTEXT:
        raise PayloadTooLarge(f"plaintext exceeds {MAX_PLAINTEXT} bytes")
    if nonce_seq is None:
        nonce_seq = _sequence_for(key, sender)
    nonce = nonce_seq.next()
    ct = AESGCM(key.secret).encrypt(
        nonce, plaintext, _gcm_aad(ENVELOPE_VERSION, key.key_id, sender, aad)
    )
    return Envelope(
        version=ENVELOPE_VERSION,
        key_id=key.key_id,
        sender=sender,
        nonce=nonce,
        ciphertext_and_tag=ct,
        aad=aad,
    )


def decrypt(key: SymmetricKey, env: Envelope, expected_aad: bytes | None = None) -> bytes:
    """Recover the plaintext iff the envelope authenticates under key.

    When expected_aad is given (the topic the envelope arrived on), an
    envelope bound to any other topic is rejected even if its tag would
    verify — this is what stops cross-topic replay.
    """
    if env.version != ENVELOPE_VERSION:
        raise AuthenticationError(f"unsupported envelope version {env.version}")
    if env.key_id != key.key_id:
        raise KeyMismatch(f"envelope keyed for {env.key_id!r}, holder has {key.key_id!r}")
    if expected_aad is not None and env.aad != expected_aad:
        raise AuthenticationError("envelope bound to a different topic")
    try:
        return AESGCM(key.secret).decrypt(
            env.nonce,
            env.ciphertext_and_tag,
            _gcm_aad(env.version, env.key_id, env.sender, env.aad),
        )
    except InvalidTag:
        raise AuthenticationError("envelope failed authentication") from None


# ---------------------------------------------------------------------------
# JSON wire codec
# ---------------------------------------------------------------------------


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str, field_name: str) -> bytes:
    if not isinstance(text, str):
        raise AuthenticationError(f"envelope field {field_name!r} must be a string")
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise AuthenticationError(f"envelope field {field_name!r} is not base64") from None
    # reject non-canonical encodings: trailing-bit tweaks must not decode equal
    if base64.b64encode(raw).decode("ascii") != text:
        raise AuthenticationError(f"envelope field {field_name!r} is not canonical base64")
    return raw


def envelope_to_json_bytes(env: Envelope) -> bytes:
    obj = {
        "v": env.version,
        "kid": env.key_id,
        "sid": env.sender,
        "n": _b64(env.nonce),
        "ct": _b64(env.ciphertext_and_tag),
        "aad": _b64(env.aad),
    }
    # no unicode escaping: byte-parity with other-language encoders
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def envelope_from_json_bytes(data: bytes) -> Envelope:
    """Decode a wire envelope; any malformation is an authentication failure."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise AuthenticationError("payload is not a JSON envelope") from None
    if not isinstance(obj, dict):
        raise AuthenticationError("payload is not a JSON envelope")
    try:
        version = obj["v"]
        key_id = obj["kid"]
        sender = obj["sid"]
        nonce = _unb64(obj["n"], "n")
        ct = _unb64(obj["ct"], "ct")
        aad = _unb64(obj["aad"], "aad")
    except KeyError as exc:
        raise AuthenticationError(f"envelope missing field {exc.args[0]!r}") from None
    if version != ENVELOPE_VERSION:
        raise AuthenticationError(f"unsupported envelope version {version!r}")
    if not isinstance(key_id, str) or not isinstance(sender, str):
        raise AuthenticationError("envelope kid/sid must be strings")
    try:
        return Envelope(
            version=version,
            key_id=key_id,
            sender=sender,
            nonce=nonce,
            ciphertext_and_tag=ct,
            aad=aad,
        )
    except SchemaError as exc:
        raise AuthenticationError(str(exc)) from None


# ---------------------------------------------------------------------------
# Sealing: rules at rest under the engine's own key
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SealedRecord:
    """One device's rules, encrypted for untrusted storage."""

    device: str
    blob: Envelope
    rule_count: int


def seal_aad(device: str) -> bytes:
    return SEAL_AAD_PREFIX + device.encode("utf-8")


def seal_rules(
    k_sgx: SymmetricKey,
    device: str,
    rules: list[Rule],
    nonce_seq: NonceSequence | None = None,
) -> SealedRecord:
    """Seal a device's rules into one record; each rule is framed separately.

    Every rule must reference the device in at least one condition or
    action, otherwise BindingError.
    """
    check_device_id(device, "seal")
    frames = []
    for rule in rules:
        if device not in rule.referenced_devices():
            raise BindingError(f"rule {rule.id!r} does not reference device {device!r}")
        encoded = rule_to_bytes(rule)
        frames.append(len(encoded).to_bytes(4, "big"))
        frames.append(encoded)
    blob = encrypt(k_sgx, b"".join(frames), seal_aad(device), sender="seal", nonce_seq=nonce_seq)
    return SealedRecord(device=device, blob=blob, rule_count=len(rules))


def unseal_rules(k_sgx: SymmetricKey, record: SealedRecord) -> list[Rule]:
    """Inverse of seal_rules; AuthenticationError on any tamper."""
    plaintext = decrypt(k_sgx, record.blob, expected_aad=seal_aad(record.device))
    rules = []
    offset = 0
    while offset < len(plaintext):
        if offset + 4 > len(plaintext):
            raise AuthenticationError("sealed record framing truncated")
        length = int.from_bytes(plaintext[offset : offset + 4], "big")
        offset += 4
        if offset + length > len(plaintext):
            raise AuthenticationError("sealed record framing truncated")
        rules.append(parse_rule(plaintext[offset : offset + length]))
        offset += length
    if len(rules) != record.rule_count:
        raise AuthenticationError(
            f"sealed record announced {record.rule_count} rules, found {len(rules)}"
        )
    return rules


def sealed_record_to_obj(record: SealedRecord) -> dict:
    return {
        "device": record.device,
        "blob": {
            "v": record.blob.version,
            "kid": record.blob.key_id,
            "sid": record.blob.sender,
            "n": _b64(record.blob.nonce),
            "ct": _b64(record.blob.ciphertext_and_tag),
            "aad": _b64(record.blob.aad),
        },
        "rule_count": record.rule_count,
    }


def sealed_record_from_obj(obj: dict) -> SealedRecord:
    try:
        blob = obj["blob"]
        return SealedRecord(
            device=obj["device"],
            blob=Envelope(
                version=blob["v"],
                key_id=blob["kid"],
                sender=blob["sid"],
                nonce=_unb64(blob["n"], "n"),
                ciphertext_and_tag=_unb64(blob["ct"], "ct"),
                aad=_unb64(blob["aad"], "aad"),
            ),
            rule_count=obj["rule_count"],
        )
    except (KeyError, TypeError) as exc:
        raise AuthenticationError(f"malformed sealed record: {exc}") from None
