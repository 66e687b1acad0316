"""
Attestation handshake
=====================

Before the engine sees a single key, it must prove what it is: a signed
measurement of its build plus a fresh key share. The key server releases
session keys only against a verified quote, over a channel derived from
ephemeral key agreement.
"""

import os

from rulevault.attestation import (
    AttestationServer,
    EnclaveAttestant,
    Measurement,
    Quote,
    SessionKeySet,
    default_build_info,
    generate_platform_keypair,
    verify_quote,
)
from rulevault.envelope import SymmetricKey
from rulevault.errors import AttestationRejected, AuthenticationError

signing_key, verify_key = generate_platform_keypair()
build = default_build_info()
topic = "attest/enclave-0"

server = AttestationServer(
    verify_key,
    Measurement.of(build),
    SessionKeySet(
        device_keys={"presence-1": SymmetricKey(os.urandom(32), key_id="presence-1")},
        provisioning_key=SymmetricKey(os.urandom(32), key_id="prov"),
    ),
)

# Honest handshake: quote -> verify -> key release -> completion.
enclave = EnclaveAttestant(build, signing_key)
quote = enclave.quote()
print("quote verifies:", verify_quote(quote, Measurement.of(build), verify_key))
response = server.provision_keys(quote, topic)
keyset = enclave.complete(response.server_public, response.envelope, topic)
print("enclave now holds", len(keyset.device_keys), "device key(s) and a storage key")

# A corrupted quote releases nothing.
forged_sig = bytearray(quote.signature)
forged_sig[0] ^= 1
try:
    server.provision_keys(
        Quote(quote.measurement, quote.enclave_ephemeral_public, bytes(forged_sig)), topic
    )
except AttestationRejected as exc:
    print("forged quote:", exc)

# Replaying the server's answer at a different enclave instance fails:
# the second instance has a different ephemeral key, so the channel key
# differs and the provisioning envelope will not open.
impostor = EnclaveAttestant(build, signing_key)
try:
    impostor.complete(response.server_public, response.envelope, topic)
except AuthenticationError:
    print("replayed transcript at a second enclave: rejected")
