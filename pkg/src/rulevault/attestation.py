"""Simulated remote attestation and session-key provisioning.

A locally generated Ed25519 keypair stands in for the platform's quoting
infrastructure: quotes are signatures over (measurement || ephemeral
public key), where the measurement is the SHA-256 of the engine build
string. Key agreement is ephemeral-ephemeral X25519; the channel key is
HKDF-SHA256 over the shared secret and both public keys, so a transcript
replayed at a different enclave instance derives a different key and the
provisioning envelope fails to open.

The key server never ships the storage key: the enclave derives its own
k_sgx from the platform secret and the measurement when the handshake
completes, so the same build re-derives the same key after a restart and
sealed stores stay readable. Handshake messages are three JSON objects
exchanged on the topic attest/<enclave_id>; see docs/wire-format.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from . import __version__
from .envelope import (
    Envelope,
    NonceSequence,
    SymmetricKey,
    decrypt,
    encrypt,
    envelope_from_json_bytes,
    envelope_to_json_bytes,
)
from .errors import AttestationRejected, AuthenticationError, SchemaError
from .model import RULE_SCHEMA_VERSION

MEASUREMENT_BYTES = 32
CHANNEL_KEY_ID = "attest-channel"
CHANNEL_INFO = b"rulevault-attest-v1"


def default_build_info(engine_version: str = __version__) -> bytes:
    return f"rulevault-engine/{engine_version};rule-schema/{RULE_SCHEMA_VERSION}".encode("utf-8")


@dataclass(frozen=True)
class Measurement:
    digest: bytes

    def __post_init__(self) -> None:
        if len(self.digest) != MEASUREMENT_BYTES:
            raise SchemaError(f"measurement digest must be {MEASUREMENT_BYTES} bytes")

    @classmethod
    def of(cls, build_info: bytes) -> "Measurement":
        h = hashes.Hash(hashes.SHA256())
        h.update(build_info)
        return cls(h.finalize())


@dataclass(frozen=True)
class Quote:
    """Signed claim that an enclave with this measurement holds this key share."""

    measurement: Measurement
    enclave_ephemeral_public: bytes
    signature: bytes


@dataclass
class SessionKeySet:
    """Keys held inside the trusted boundary after a successful handshake.

    On the server side k_sgx is None: the storage key is generated
    enclave-side and never crosses the wire.
    """

    device_keys: dict[str, SymmetricKey]
    provisioning_key: SymmetricKey
    k_sgx: SymmetricKey | None = None


# ---------------------------------------------------------------------------
# Platform signing (simulated quoting infrastructure)
# ---------------------------------------------------------------------------


def generate_platform_keypair(seed: bytes | None = None) -> tuple[bytes, bytes]:
    """Returns (signing key bytes, verification key bytes), both 32 bytes."""
    if seed is not None:
        sk = Ed25519PrivateKey.from_private_bytes(seed)
    else:
        sk = Ed25519PrivateKey.generate()
    sk_bytes = sk.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )
    vk_bytes = sk.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return sk_bytes, vk_bytes


def _quote_signing_payload(measurement: Measurement, eph_pub: bytes) -> bytes:
    return measurement.digest + eph_pub


class EnclaveAttestant:
    """Enclave side of one handshake: fresh ephemeral key, quote, completion."""

    def __init__(self, build_info: bytes, platform_signing_key: bytes):
        self._build_info = build_info
        self._platform_secret = platform_signing_key
        self._platform_sk = Ed25519PrivateKey.from_private_bytes(platform_signing_key)
        self._ephemeral = X25519PrivateKey.generate()
        self.ephemeral_public = self._ephemeral.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    def quote(self) -> Quote:
        measurement = Measurement.of(self._build_info)
        signature = self._platform_sk.sign(
            _quote_signing_payload(measurement, self.ephemeral_public)
        )
        return Quote(
            measurement=measurement,
            enclave_ephemeral_public=self.ephemeral_public,
            signature=signature,
        )

    def complete(self, server_public: bytes, provisioning: Envelope, topic: str) -> SessionKeySet:
        """Open the provisioning envelope and assemble the in-boundary key set.

        Raises AuthenticationError when the transcript was not addressed to
        this handshake instance (wrong ephemeral, tampered envelope).
        """
        channel = derive_channel_key(self._ephemeral, server_public, self.ephemeral_public)
        plaintext = decrypt(channel, provisioning, expected_aad=topic.encode("utf-8"))
        try:
            obj = json.loads(plaintext.decode("utf-8"))
            device_keys = {
                device: SymmetricKey(bytes.fromhex(hexkey), key_id=device)
                for device, hexkey in obj["device_keys"].items()
            }
            provisioning_key = SymmetricKey(
                bytes.fromhex(obj["provisioning_key"]), key_id="prov"
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise AuthenticationError(f"malformed provisioning payload: {exc}") from None
        return SessionKeySet(
            device_keys=device_keys,
            provisioning_key=provisioning_key,
            k_sgx=self.derive_storage_key(),
        )

    def derive_storage_key(self) -> SymmetricKey:
        """Storage key derived on demand from the platform secret and the
        measurement, never transmitted. The same build on the same platform
        derives the same key, so sealed stores survive restarts."""
        material = HKDF(
            algorithm=hashes.SHA256(),
            length=32,
            salt=None,
            info=b"rulevault-seal-v1" + Measurement.of(self._build_info).digest,
        ).derive(self._platform_secret)
        return SymmetricKey(material, key_id="k-sgx")


def generate_quote(build_info: bytes, platform_signing_key: bytes) -> Quote:
    """One-shot quote without keeping the attestant (tests, demos)."""
    return EnclaveAttestant(build_info, platform_signing_key).quote()


def verify_quote(quote: Quote, expected: Measurement, platform_vk: bytes) -> bool:
    """True iff the signature verifies and the measurement matches. Total."""
    if quote.measurement.digest != expected.digest:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(platform_vk).verify(
            quote.signature,
            _quote_signing_payload(quote.measurement, quote.enclave_ephemeral_public),
        )
        return True
    except (InvalidSignature, ValueError):
        return False


def derive_channel_key(
    own_private: X25519PrivateKey, peer_public: bytes, enclave_public: bytes
) -> SymmetricKey:
    shared = own_private.exchange(X25519PublicKey.from_public_bytes(peer_public))
    own_public = own_private.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    # info fixes the transcript orientation: enclave public first
    if enclave_public == own_public:
        server_public = peer_public
    else:
        server_public = own_public
    material = HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=CHANNEL_INFO + enclave_public + server_public,
    ).derive(shared)
    return SymmetricKey(material, key_id=CHANNEL_KEY_ID)


@dataclass
class ProvisioningResponse:
    server_public: bytes
    envelope: Envelope


class AttestationServer:
    """Key-server side: verifies quotes and releases session keys.

    Key release is gated hard on verify_quote; a rejected quote produces
    AttestationRejected and no ciphertext at all.
    """

    def __init__(
        self,
        platform_vk: bytes,
        expected_measurement: Measurement,
        server_keys: SessionKeySet,
    ):
        self.platform_vk = platform_vk
        self.expected_measurement = expected_measurement
        self.server_keys = server_keys
        self.provisioned_count = 0
        self.rejected_count = 0

    def provision_keys(self, quote: Quote, topic: str) -> ProvisioningResponse:
        if not verify_quote(quote, self.expected_measurement, self.platform_vk):
            self.rejected_count += 1
            raise AttestationRejected("quote verification failed; no keys released")
        ephemeral = X25519PrivateKey.generate()
        server_public = ephemeral.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        channel = derive_channel_key(
            ephemeral, quote.enclave_ephemeral_public, quote.enclave_ephemeral_public
        )
        payload = json.dumps(
            {
                "device_keys": {
                    device: key.secret.hex()
                    for device, key in self.server_keys.device_keys.items()
                },
                "provisioning_key": self.server_keys.provisioning_key.secret.hex(),
            },
            separators=(",", ":"),
        ).encode("utf-8")
        env = encrypt(
            channel,
            payload,
            aad=topic.encode("utf-8"),
            sender="keyserver",
            nonce_seq=NonceSequence("keyserver"),
        )
        self.provisioned_count += 1
        return ProvisioningResponse(server_public=server_public, envelope=env)


# ---------------------------------------------------------------------------
# Handshake message codec (topic attest/<enclave_id>)
# ---------------------------------------------------------------------------


def quote_to_obj(quote: Quote) -> dict:
    return {
        "type": "quote",
        "measurement": quote.measurement.digest.hex(),
        "eph_pub": quote.enclave_ephemeral_public.hex(),
        "sig": quote.signature.hex(),
    }


def quote_from_obj(obj: dict) -> Quote:
    try:
        return Quote(
            measurement=Measurement(bytes.fromhex(obj["measurement"])),
            enclave_ephemeral_public=bytes.fromhex(obj["eph_pub"]),
            signature=bytes.fromhex(obj["sig"]),
        )
    except (KeyError, TypeError, ValueError, SchemaError) as exc:
        raise AttestationRejected(f"malformed quote message: {exc}") from None


def server_hello_to_obj(response: ProvisioningResponse) -> dict:
    return {"type": "server_hello", "eph_pub": response.server_public.hex()}


def provision_to_obj(response: ProvisioningResponse) -> dict:
    return {
        "type": "provision",
        "envelope": json.loads(envelope_to_json_bytes(response.envelope).decode("utf-8")),
    }


def envelope_from_obj(obj: dict) -> Envelope:
    return envelope_from_json_bytes(
        json.dumps(obj, separators=(",", ":")).encode("utf-8")
    )
