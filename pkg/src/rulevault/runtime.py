"""Long-running component glue: enclave service, hub service, provisioning.

Message conventions on top of the broker topics:

  prov/rules    a JSON array is a ruleset provision request; a JSON object
                with an "ack" field is the engine's acknowledgement. In
                Full mode both directions ride in envelopes under the
                provisioning key; the engine skips envelopes it sent
                itself (sender id match).
  attest/<id>   JSON objects typed "quote", "server_hello", "provision",
                or "reject"; see docs/wire-format.md.
"""

from __future__ import annotations

import json
import logging
import threading
import time

from .attestation import (
    AttestationServer,
    EnclaveAttestant,
    SessionKeySet,
    default_build_info,
    envelope_from_obj,
    provision_to_obj,
    quote_from_obj,
    quote_to_obj,
    server_hello_to_obj,
)
from .broker import BrokerClient
from .enclave import Mode, PROVISION_TOPIC, TrustedBoundary, chunk_ruleset
from .envelope import (
    SymmetricKey,
    decrypt,
    encrypt,
    envelope_from_json_bytes,
    envelope_to_json_bytes,
)
from .errors import (
    AttestationRejected,
    AuthenticationError,
    ConfigError,
    PublishError,
    RuleVaultError,
)
from .hub import Hub
from .model import DeviceEvent, action_to_bytes, parse_event, parse_ruleset, ruleset_to_bytes

logger = logging.getLogger(__name__)

OPERATOR_SENDER = "operator"


class EnclaveRunner:
    """Connects a trusted boundary to the broker and serves events.

    In Full mode the runner will not hold any session keys until the
    attestation handshake with the key server succeeds; after the
    configured number of failed attempts it gives up with ConfigError.
    """

    def __init__(
        self,
        broker_host: str,
        broker_port: int,
        mode: Mode = Mode.FULL,
        enclave_id: str = "enclave-0",
        platform_signing_key: bytes | None = None,
        build_info: bytes | None = None,
        cache_capacity: int = 100,
        cache_policy: str = "lru",
        store_path: str | None = None,
        attest_retries: int = 5,
        attest_timeout: float = 2.0,
        gate_tap=None,
    ):
        self.broker_host = broker_host
        self.broker_port = broker_port
        self.mode = Mode(mode)
        self.enclave_id = enclave_id
        self.platform_signing_key = platform_signing_key
        self.build_info = build_info if build_info is not None else default_build_info()
        self.cache_capacity = cache_capacity
        self.cache_policy = cache_policy
        self.store_path = store_path
        self.attest_retries = attest_retries
        self.attest_timeout = attest_timeout
        self.gate_tap = gate_tap
        self.boundary: TrustedBoundary | None = None
        self.auth_failures = 0
        self._client: BrokerClient | None = None
        self._thread: threading.Thread | None = None
        self._running = False

    def start(self) -> "EnclaveRunner":
        self._client = BrokerClient(self.broker_host, self.broker_port)
        if self.mode is Mode.FULL:
            keyset = self._attest()
            self.boundary = TrustedBoundary(
                mode=self.mode,
                device_keys=keyset.device_keys,
                k_sgx=keyset.k_sgx,
                provisioning_key=keyset.provisioning_key,
                cache_capacity=self.cache_capacity,
                cache_policy=self.cache_policy,
                store_path=self.store_path,
                enclave_id=self.enclave_id,
                gate_tap=self.gate_tap,
            )
        else:
            self.boundary = TrustedBoundary(
                mode=self.mode,
                cache_capacity=self.cache_capacity,
                cache_policy=self.cache_policy,
                enclave_id=self.enclave_id,
                gate_tap=self.gate_tap,
            )
        self._client.subscribe("evt/+")
        self._client.subscribe(PROVISION_TOPIC)
        self._running = True
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        logger.info("enclave %s serving events in %s mode", self.enclave_id, self.mode.value)
        return self

    def _attest(self) -> SessionKeySet:
        if self.platform_signing_key is None:
            raise ConfigError("Full mode needs the platform signing key to build quotes")
        topic = f"attest/{self.enclave_id}"
        self._client.subscribe(topic)
        for attempt in range(1, self.attest_retries + 1):
            attestant = EnclaveAttestant(self.build_info, self.platform_signing_key)
            quote_payload = json.dumps(quote_to_obj(attestant.quote())).encode("utf-8")
            self._client.publish(topic, quote_payload)
            keyset = self._await_provisioning(attestant, topic)
            if keyset is not None:
                logger.info(
                    "attestation complete: %d device keys provisioned",
                    len(keyset.device_keys),
                )
                return keyset
            logger.warning(
                "attestation attempt %d/%d got no provisioning response",
                attempt,
                self.attest_retries,
            )
        raise ConfigError(
            f"attestation failed after {self.attest_retries} attempts; "
            "is the key server reachable?"
        )

    def _await_provisioning(self, attestant: EnclaveAttestant, topic: str) -> SessionKeySet | None:
        server_public: bytes | None = None
        deadline = time.monotonic() + self.attest_timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            message = self._client.receive(timeout=remaining)
            if message is None:
                return None
            msg_topic, payload, _ = message
            if msg_topic != topic:
                continue
            try:
                obj = json.loads(payload.decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                continue
            msg_type = obj.get("type")
            if msg_type == "reject":
                return None
            if msg_type == "server_hello":
                try:
                    server_public = bytes.fromhex(obj["eph_pub"])
                except (KeyError, ValueError):
                    continue
            elif msg_type == "provision" and server_public is not None:
                try:
                    envelope = envelope_from_obj(obj["envelope"])
                    return attestant.complete(server_public, envelope, topic)
                except (KeyError, AuthenticationError) as exc:
                    logger.warning("provisioning envelope rejected: %s", exc)
                    return None

    def _loop(self) -> None:
        while self._running:
            message = self._client.receive(timeout=0.2)
            if message is None:
                continue
            topic, payload, _ = message
            try:
                if topic == PROVISION_TOPIC:
                    self._handle_provision(payload)
                elif topic.startswith("evt/"):
                    self._handle_event(topic, payload)
            except RuleVaultError as exc:
                self.auth_failures += 1
                logger.debug("rejected message on %s: %s", topic, exc)

    def _handle_event(self, topic: str, payload: bytes) -> None:
        if self.mode is Mode.PLAIN:
            # untrusted host-side parse; the boundary takes the object
            outputs = self.boundary.handle_event(parse_event(payload))
            for action in outputs:
                self._client.publish(f"cmd/{action.device}", action_to_bytes(action))
        else:
            for out_topic, out_payload in self.boundary.handle_event(payload, topic):
                self._client.publish(out_topic, out_payload)

    def _handle_provision(self, payload: bytes) -> None:
        if self.mode is Mode.FULL:
            envelope = envelope_from_json_bytes(payload)
            if envelope.sender == self.enclave_id:
                return  # our own ack echoed back
            self.boundary.provision_ruleset(envelope)
        else:
            obj = json.loads(payload.decode("utf-8"))
            if not isinstance(obj, list):
                return  # an ack or foreign control object
            self.boundary.provision_ruleset(payload)
        devices, rules = self.boundary.last_provision
        ack = json.dumps({"ack": {"devices": devices, "rules": rules}}).encode("utf-8")
        if self.mode is Mode.FULL:
            ack_env = encrypt(
                self.boundary.provisioning_key,
                ack,
                aad=PROVISION_TOPIC.encode("utf-8"),
                sender=self.enclave_id,
            )
            ack = envelope_to_json_bytes(ack_env)
        self._client.publish(PROVISION_TOPIC, ack)

    def stop(self) -> None:
        self._running = False
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        if self._client is not None:
            self._client.close()
        if self.boundary is not None:
            self.boundary.close()


class HubRunner:
    """Serves a hub's actuators and, optionally, the attestation key service."""

    def __init__(
        self,
        broker_host: str,
        broker_port: int,
        hub: Hub,
        attestation: AttestationServer | None = None,
        enclave_id: str = "enclave-0",
    ):
        self.broker_host = broker_host
        self.broker_port = broker_port
        self.hub = hub
        self.attestation = attestation
        self.enclave_id = enclave_id
        self._client: BrokerClient | None = None
        self._thread: threading.Thread | None = None
        self._running = False

    def start(self) -> "HubRunner":
        self._client = BrokerClient(self.broker_host, self.broker_port)
        for topic in self.hub.command_topics():
            self._client.subscribe(topic)
        if self.attestation is not None:
            self._client.subscribe(f"attest/{self.enclave_id}")
        self._running = True
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        return self

    def publish_event(self, event: DeviceEvent) -> None:
        """Relay one local device reading upstream."""
        topic, payload = self.hub.wrap_upstream(event)
        self._client.publish(topic, payload)

    def _loop(self) -> None:
        while self._running:
            message = self._client.receive(timeout=0.2)
            if message is None:
                continue
            topic, payload, _ = message
            if topic.startswith("cmd/"):
                self.hub.handle_command(topic, payload)
            elif topic.startswith("attest/") and self.attestation is not None:
                self._serve_attestation(topic, payload)

    def _serve_attestation(self, topic: str, payload: bytes) -> None:
        try:
            obj = json.loads(payload.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return
        if obj.get("type") != "quote":
            return
        try:
            quote = quote_from_obj(obj)
            response = self.attestation.provision_keys(quote, topic)
        except AttestationRejected as exc:
            logger.warning("quote rejected: %s", exc)
            self._client.publish(topic, json.dumps({"type": "reject"}).encode("utf-8"))
            return
        self._client.publish(topic, json.dumps(server_hello_to_obj(response)).encode("utf-8"))
        self._client.publish(topic, json.dumps(provision_to_obj(response)).encode("utf-8"))

    def stop(self) -> None:
        self._running = False
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        if self._client is not None:
            self._client.close()


def provision_rules(
    broker_host: str,
    broker_port: int,
    ruleset_payload: bytes,
    mode: Mode = Mode.FULL,
    provisioning_key: SymmetricKey | None = None,
    timeout: float = 10.0,
) -> tuple[int, int]:
    """Publish a ruleset and wait for the engine's acks.

    Large rulesets are split into device-complete chunks to stay under the
    transit payload limit; counts are summed over the acks. Returns
    (devices written, rules installed); PublishError when an ack does not
    arrive in time.
    """
    rules = parse_ruleset(ruleset_payload)
    if mode is Mode.FULL and provisioning_key is None:
        raise ConfigError("Full mode provisioning needs the provisioning key")
    client = BrokerClient(broker_host, broker_port)
    devices_total = 0
    rules_total = 0
    try:
        client.subscribe(PROVISION_TOPIC)
        for chunk in chunk_ruleset(rules):
            payload = ruleset_to_bytes(chunk)
            if mode is Mode.FULL:
                env = encrypt(
                    provisioning_key,
                    payload,
                    aad=PROVISION_TOPIC.encode("utf-8"),
                    sender=OPERATOR_SENDER,
                )
                payload = envelope_to_json_bytes(env)
            client.publish(PROVISION_TOPIC, payload)
            devices, installed = _await_ack(client, mode, provisioning_key, timeout)
            devices_total += devices
            rules_total += installed
        return devices_total, rules_total
    finally:
        client.close()


def _await_ack(
    client: BrokerClient,
    mode: Mode,
    provisioning_key: SymmetricKey | None,
    timeout: float,
) -> tuple[int, int]:
    deadline = time.monotonic() + timeout
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise PublishError("no provisioning ack from the engine")
        message = client.receive(timeout=remaining)
        if message is None:
            continue
        topic, payload, _ = message
        if topic != PROVISION_TOPIC:
            continue
        ack = _decode_ack(payload, mode, provisioning_key)
        if ack is not None:
            return ack


def _decode_ack(
    payload: bytes, mode: Mode, provisioning_key: SymmetricKey | None
) -> tuple[int, int] | None:
    try:
        if mode is Mode.FULL:
            env = envelope_from_json_bytes(payload)
            if env.sender == OPERATOR_SENDER:
                return None  # our own request echoed back
            payload = decrypt(provisioning_key, env, expected_aad=PROVISION_TOPIC.encode("utf-8"))
        obj = json.loads(payload.decode("utf-8"))
    except (RuleVaultError, ValueError, UnicodeDecodeError):
        return None
    if not isinstance(obj, dict) or "ack" not in obj:
        return None
    ack = obj["ack"]
    return int(ack["devices"]), int(ack["rules"])
