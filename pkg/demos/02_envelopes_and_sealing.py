"""
Envelopes and sealing
=====================

Everything in transit rides in an AES-256-GCM envelope bound to its
transport topic; rules at rest are sealed under the engine's storage key.
Tampering with a single bit anywhere is detected.
"""

import os

from rulevault.envelope import (
    SymmetricKey,
    decrypt,
    encrypt,
    envelope_from_json_bytes,
    envelope_to_json_bytes,
    seal_rules,
    unseal_rules,
)
from rulevault.errors import AuthenticationError
from rulevault.model import ActionCommand, Condition, Operator, Rule

key = SymmetricKey(os.urandom(32), key_id="presence-1")

# Round trip: the envelope decrypts back to the exact plaintext.
envelope = encrypt(key, b'{"value":"present"}', aad=b"evt/presence-1", sender="presence-1")
wire = envelope_to_json_bytes(envelope)
print("wire envelope:", wire.decode()[:80], "...")
print("round trip ok:", decrypt(key, envelope) == b'{"value":"present"}')

# Flip one bit anywhere in the serialized envelope: always rejected.
rejected = 0
for position in range(len(wire)):
    corrupted = bytearray(wire)
    corrupted[position] ^= 0x01
    try:
        decrypt(key, envelope_from_json_bytes(bytes(corrupted)), expected_aad=b"evt/presence-1")
    except AuthenticationError:
        rejected += 1
print(f"single-bit flips rejected: {rejected}/{len(wire)}")

# Topic binding: the same envelope replayed onto another topic fails even
# though its tag is intact.
try:
    decrypt(key, envelope, expected_aad=b"evt/someone-else")
except AuthenticationError as exc:
    print("cross-topic replay:", exc)

# Sealing: a device's rules go to untrusted storage in one opaque record.
k_sgx = SymmetricKey(os.urandom(32), key_id="k-sgx")
rules = [
    Rule(
        id=f"r{i}",
        name="stored rule",
        conditions=(Condition("presence-1", "presence", Operator.EQUALS, "present"),),
        actions=(ActionCommand("switch-1", "switch", "on"),),
    )
    for i in range(3)
]
record = seal_rules(k_sgx, "presence-1", rules)
print("sealed record holds", record.rule_count, "rules; unseal ok:", unseal_rules(k_sgx, record) == rules)

wrong_key = SymmetricKey(os.urandom(32), key_id="k-sgx")
try:
    unseal_rules(wrong_key, record)
except AuthenticationError:
    print("unsealing with a different key: rejected")
