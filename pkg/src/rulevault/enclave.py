"""Trusted-boundary rule engine.

The boundary runs in one of three protection modes:

  Plain          direct calls, parsed objects in and out, plaintext store.
  TrustedNoEnc   every payload is serialized, copied through an explicit
                 call gate, and re-parsed inside; store holds serialized
                 but unencrypted records. Models the marshalling cost of a
                 hardware trusted boundary without its cryptography.
  Full           TrustedNoEnc plus envelope crypto: events arrive as
                 AES-GCM envelopes under per-device session keys, rules
                 rest sealed under the engine storage key, and every
                 emitted command leaves as an envelope bound to the target
                 device's command topic.

The three modes are semantically identical: for the same rules and events
they fire the same commands. Only the protection wrapping differs.

Rules are grouped per device referenced by their conditions. A rule fires
on an event only if at least one condition names the event's device; other
conditions read from a last-known-value table maintained per (device,
attribute), so multi-device rules stay evaluable from single events.
"""

from __future__ import annotations

import logging
import threading
from contextlib import contextmanager
from enum import Enum
from typing import Callable, Iterable, Union

from .cache import RuleCache
from .envelope import (
    Envelope,
    NonceSequence,
    SymmetricKey,
    decrypt,
    encrypt,
    envelope_from_json_bytes,
    envelope_to_json_bytes,
    seal_rules,
    unseal_rules,
)
from .errors import (
    AuthenticationError,
    InvalidConfig,
    KeyMismatch,
    ModeChangeWhileBusy,
    SchemaError,
)
from .model import (
    ActionCommand,
    Combinator,
    DeviceEvent,
    Rule,
    Scalar,
    action_to_bytes,
    compare_scalars,
    event_to_bytes,
    parse_event,
    parse_ruleset,
    ruleset_to_bytes,
)
from .store import SealedStore

logger = logging.getLogger(__name__)

PROVISION_TOPIC = "prov/rules"


class Mode(str, Enum):
    PLAIN = "plain"
    TRUSTED_NO_ENC = "trusted_no_enc"
    FULL = "full"


def event_topic(device: str) -> str:
    return f"evt/{device}"


def command_topic(device: str) -> str:
    return f"cmd/{device}"


def group_rules_by_device(rules: Iterable[Rule]) -> dict[str, list[Rule]]:
    """Group rules under every device their conditions reference.

    A rule with conditions on several devices appears in each group, so any
    device whose event could fire the rule finds it in its own record.
    """
    groups: dict[str, list[Rule]] = {}
    for rule in rules:
        for device in rule.condition_devices():
            groups.setdefault(device, []).append(rule)
    return groups


# Keeps each provisioning payload under the 1 MiB transit limits with room
# for envelope and frame expansion.
PROVISION_CHUNK_BYTES = 600_000


def chunk_ruleset(rules: list[Rule], max_bytes: int = PROVISION_CHUNK_BYTES) -> list[list[Rule]]:
    """Split a large ruleset into provisionable chunks.

    Devices whose groups share a rule stay in the same chunk, so each
    chunk's per-device records are complete and chunked provisioning is
    equivalent to one big upload under replace semantics.
    """
    if not rules:
        return [[]]
    parent: dict[str, str] = {}

    def find(device: str) -> str:
        root = device
        while parent[root] != root:
            root = parent[root]
        while parent[device] != root:
            parent[device], device = root, parent[device]
        return root

    for rule in rules:
        devices = rule.condition_devices()
        for device in devices:
            parent.setdefault(device, device)
        for other in devices[1:]:
            parent[find(other)] = find(devices[0])

    component_rules: dict[str, list[Rule]] = {}
    for rule in rules:
        component_rules.setdefault(find(rule.condition_devices()[0]), []).append(rule)

    chunks: list[list[Rule]] = []
    current: list[Rule] = []
    current_size = 2  # the surrounding JSON array brackets
    for component in component_rules.values():
        size = len(ruleset_to_bytes(component))
        if current and current_size + size > max_bytes:
            chunks.append(current)
            current = []
            current_size = 2
        current.extend(component)
        current_size += size
    if current:
        chunks.append(current)
    return chunks


GateTap = Callable[[str, bytes], None]


class TrustedBoundary:
    """The simulated enclave: key material, rule store, cache, evaluator."""

    def __init__(
        self,
        mode: Mode = Mode.FULL,
        device_keys: dict[str, SymmetricKey] | None = None,
        k_sgx: SymmetricKey | None = None,
        provisioning_key: SymmetricKey | None = None,
        cache_capacity: int = 100,
        cache_policy: str = "lru",
        store_path: str | None = None,
        enclave_id: str = "enclave-0",
        trace_sink=None,
        gate_tap: GateTap | None = None,
    ):
        self.mode = Mode(mode)
        self.enclave_id = enclave_id
        self.device_keys = device_keys or {}
        self.k_sgx = k_sgx
        self.provisioning_key = provisioning_key
        if self.mode is Mode.FULL:
            if self.k_sgx is None:
                raise InvalidConfig("Full mode requires a storage key")
            self._sealed_store = SealedStore(store_path)
        else:
            self._sealed_store = SealedStore(None)
        self._bytes_store: dict[str, bytes] = {}
        self._plain_store: dict[str, list[Rule]] = {}
        self.cache = RuleCache(capacity=cache_capacity, policy=cache_policy)
        self.trace_sink = trace_sink
        self.gate_tap = gate_tap
        self._last_values: dict[tuple[str, str], Scalar] = {}
        self._nonces = NonceSequence(enclave_id)
        self._busy = 0
        self._busy_lock = threading.Lock()
        self._engine_lock = threading.RLock()
        self.events_handled = 0
        self.unknown_device_events = 0
        self.last_provision: tuple[int, int] = (0, 0)  # (devices written, rules parsed)
        # crypto op counts over event handling: 1 decrypt per event,
        # 1 encrypt per emitted command, 1 unseal per cache miss
        self.decrypt_calls = 0
        self.encrypt_calls = 0
        self.unseal_calls = 0

    # -- gates ---------------------------------------------------------

    def _tap(self, direction: str, payload: bytes) -> None:
        if self.gate_tap is not None:
            self.gate_tap(direction, payload)

    def _gate_in(self, payload: bytes) -> bytes:
        self._tap("in", payload)
        return bytes(payload)

    def _gate_out(self, payload: bytes) -> bytes:
        buf = bytes(payload)
        self._tap("out", buf)
        return buf

    @contextmanager
    def _busy_guard(self):
        with self._busy_lock:
            self._busy += 1
        try:
            yield
        finally:
            with self._busy_lock:
                self._busy -= 1

    def _trace(self, op: str, region: str) -> None:
        if self.trace_sink is not None:
            self.trace_sink.record(op, region)

    # -- provisioning ----------------------------------------------------

    def provision_ruleset(self, payload: Union[bytes, Envelope, list[Rule]]) -> int:
        """Install a ruleset; returns the number of device records written.

        Full mode expects an envelope (object or wire bytes) under the
        provisioning key; the other modes take raw ruleset JSON or parsed
        rules. The store is untouched when authentication or parsing fails.
        """
        with self._busy_guard(), self._engine_lock:
            rules = self._open_ruleset(payload)
            groups = group_rules_by_device(rules)
            for device, group in groups.items():
                self._store_group(device, group)
                self.cache.invalidate(device)
            self.last_provision = (len(groups), len(rules))
            logger.info(
                "provisioned %d rules across %d devices (%s mode)",
                len(rules),
                len(groups),
                self.mode.value,
            )
            return len(groups)

    def _open_ruleset(self, payload: Union[bytes, Envelope, list[Rule]]) -> list[Rule]:
        if self.mode is Mode.FULL:
            if isinstance(payload, (bytes, bytearray)):
                payload = envelope_from_json_bytes(bytes(payload))
            if not isinstance(payload, Envelope):
                raise AuthenticationError("Full mode requires an enveloped ruleset")
            if self.provisioning_key is None:
                raise InvalidConfig("no provisioning key; run attestation first")
            raw = decrypt(
                self.provisioning_key, payload, expected_aad=PROVISION_TOPIC.encode("utf-8")
            )
            return parse_ruleset(raw)
        if isinstance(payload, list):
            return payload
        return parse_ruleset(self._gate_in(bytes(payload)))

    def _store_group(self, device: str, group: list[Rule]) -> None:
        if self.mode is Mode.FULL:
            record = seal_rules(self.k_sgx, device, group, nonce_seq=self._nonces)
            encoded = self._sealed_store.put(device, record)
            self._tap("store_write", encoded)
        elif self.mode is Mode.TRUSTED_NO_ENC:
            encoded = ruleset_to_bytes(group)
            self._bytes_store[device] = encoded
            self._tap("store_write", encoded)
        else:
            self._plain_store[device] = list(group)

    # -- rule fetch: cache over store -------------------------------------

    def fetch_rules(self, device: str) -> list[Rule] | None:
        """Cache-through fetch; None when the device has no stored rules."""
        self._trace("R", "cache")
        cached = self.cache.get(device)
        if cached is not None:
            return cached
        rules = self._load_from_store(device)
        if rules is None:
            return None
        self.cache.put(device, rules)
        self._trace("W", "cache")
        return rules

    def _load_from_store(self, device: str) -> list[Rule] | None:
        if self.mode is Mode.FULL:
            record = self._sealed_store.get(device)
            if record is None:
                return None
            self._trace("R", "store")
            self.unseal_calls += 1
            return unseal_rules(self.k_sgx, record)
        if self.mode is Mode.TRUSTED_NO_ENC:
            encoded = self._bytes_store.get(device)
            if encoded is None:
                return None
            self._trace("R", "store")
            return parse_ruleset(encoded)
        rules = self._plain_store.get(device)
        if rules is None:
            return None
        self._trace("R", "store")
        return rules

    # -- evaluation ------------------------------------------------------

    def _condition_holds(self, cond) -> bool:
        self._trace("R", "rule_cond")
        value = self._last_values.get((cond.device, cond.attribute))
        if value is None:
            return False
        return compare_scalars(cond.operator, value, cond.value)

    def _evaluate(self, event: DeviceEvent) -> list[ActionCommand]:
        self._trace("R", "event_buf")
        self._last_values[(event.device, event.attribute)] = event.value
        rules = self.fetch_rules(event.device)
        if rules is None:
            self.unknown_device_events += 1
            logger.debug("no rules stored for device %s", event.device)
            return []
        fired: list[ActionCommand] = []
        for rule in rules:
            if not any(c.device == event.device for c in rule.conditions):
                continue
            if rule.combinator is Combinator.ALL:
                matched = all(self._condition_holds(c) for c in rule.conditions)
            else:
                matched = any(self._condition_holds(c) for c in rule.conditions)
            if matched:
                for action in rule.actions:
                    self._trace("R", "rule_act")
                    fired.append(action)
                    self._trace("W", "out_buf")
        return fired

    # -- event handling per mode -----------------------------------------

    def handle_event(
        self, message: Union[DeviceEvent, bytes], topic: str | None = None
    ) -> Union[list[ActionCommand], list[tuple[str, bytes]]]:
        """Process one inbound event message.

        Plain mode takes a DeviceEvent and returns ActionCommands.
        TrustedNoEnc takes plaintext event JSON bytes and returns
        (command topic, plaintext command JSON) pairs. Full takes envelope
        JSON bytes plus the topic it arrived on and returns (command topic,
        envelope JSON) pairs. Events for devices without stored rules
        produce an empty result.
        """
        with self._busy_guard(), self._engine_lock:
            self.events_handled += 1
            if self.mode is Mode.PLAIN:
                if not isinstance(message, DeviceEvent):
                    raise SchemaError("Plain mode handles DeviceEvent objects")
                return self._evaluate(message)
            if self.mode is Mode.TRUSTED_NO_ENC:
                event = parse_event(self._gate_in(bytes(message)))
                actions = self._evaluate(event)
                return [
                    (command_topic(a.device), self._gate_out(action_to_bytes(a)))
                    for a in actions
                ]
            return self._handle_full(bytes(message), topic)

    def _handle_full(self, payload: bytes, topic: str | None) -> list[tuple[str, bytes]]:
        buf = self._gate_in(payload)
        env = envelope_from_json_bytes(buf)
        key = self.device_keys.get(env.key_id)
        if key is None:
            raise KeyMismatch(f"no session key for {env.key_id!r}")
        expected = topic.encode("utf-8") if topic is not None else None
        plaintext = decrypt(key, env, expected_aad=expected)
        self.decrypt_calls += 1
        event = parse_event(plaintext)
        if event.device != env.key_id:
            raise AuthenticationError(
                f"event claims device {event.device!r} but was keyed for {env.key_id!r}"
            )
        actions = self._evaluate(event)
        out: list[tuple[str, bytes]] = []
        for action in actions:
            target_key = self.device_keys.get(action.device)
            if target_key is None:
                logger.warning("no session key for command target %s; dropped", action.device)
                continue
            out_topic = command_topic(action.device)
            out_env = encrypt(
                target_key,
                action_to_bytes(action),
                aad=out_topic.encode("utf-8"),
                sender=self.enclave_id,
                nonce_seq=self._nonces,
            )
            self.encrypt_calls += 1
            out.append((out_topic, self._gate_out(envelope_to_json_bytes(out_env))))
        return out

    # -- mode switching and state management -------------------------------

    def set_mode(self, mode: Mode) -> None:
        """Re-encode the store for a new protection mode.

        Refuses while events are in flight. Requires a storage key when
        switching into Full mode. File persistence applies only to stores
        opened in Full mode at construction time.
        """
        mode = Mode(mode)
        with self._busy_lock:
            if self._busy:
                raise ModeChangeWhileBusy("events in flight; mode unchanged")
            with self._engine_lock:
                if mode is self.mode:
                    return
                groups = self._all_groups()
                if mode is Mode.FULL and self.k_sgx is None:
                    raise InvalidConfig("Full mode requires a storage key")
                self.mode = mode
                self._sealed_store.close()
                self._sealed_store = SealedStore(None)
                self._bytes_store = {}
                self._plain_store = {}
                self.cache.clear()
                for device, group in groups.items():
                    self._store_group(device, group)

    def _all_groups(self) -> dict[str, list[Rule]]:
        if self.mode is Mode.FULL:
            return {
                device: unseal_rules(self.k_sgx, self._sealed_store.get(device))
                for device in self._sealed_store.devices()
            }
        if self.mode is Mode.TRUSTED_NO_ENC:
            return {d: parse_ruleset(b) for d, b in self._bytes_store.items()}
        return dict(self._plain_store)

    def reset_runtime_state(self) -> None:
        """Forget last-known values and cached rules; the store is kept.

        Trace comparisons require each event set to start from a cold
        engine.
        """
        with self._engine_lock:
            self._last_values.clear()
            self.cache.clear()
            self.cache.reset_counters()

    def stored_devices(self) -> list[str]:
        if self.mode is Mode.FULL:
            return self._sealed_store.devices()
        if self.mode is Mode.TRUSTED_NO_ENC:
            return list(self._bytes_store)
        return list(self._plain_store)

    def stored_rule_count(self, device: str) -> int:
        if self.mode is Mode.FULL:
            record = self._sealed_store.get(device)
            return record.rule_count if record else 0
        rules = self._load_from_store(device)
        return len(rules) if rules else 0

    def flush(self) -> None:
        self._sealed_store.flush()

    def close(self) -> None:
        self._sealed_store.close()


def encode_event_for_mode(
    event: DeviceEvent,
    mode: Mode,
    device_keys: dict[str, SymmetricKey] | None = None,
    nonce_seq: NonceSequence | None = None,
) -> tuple[Union[DeviceEvent, bytes], str]:
    """Prepare (message, topic) as the transport would deliver it.

    Plain passes the object through; TrustedNoEnc serializes; Full
    encrypts under the event device's session key with the event topic as
    associated data.
    """
    topic = event_topic(event.device)
    if mode is Mode.PLAIN:
        return event, topic
    raw = event_to_bytes(event)
    if mode is Mode.TRUSTED_NO_ENC:
        return raw, topic
    if device_keys is None or event.device not in device_keys:
        raise KeyMismatch(f"no session key for {event.device!r}")
    env = encrypt(
        device_keys[event.device],
        raw,
        aad=topic.encode("utf-8"),
        sender=event.device,
        nonce_seq=nonce_seq,
    )
    return envelope_to_json_bytes(env), topic
