"""Hub/gateway relay: envelope crypto on behalf of local devices.

Upstream, raw sensor readings are wrapped into envelopes before they touch
the broker; downstream, command envelopes are verified and decrypted, and
only then applied to the local actuator register. A command that fails any
check is dropped and counted, never forwarded.
"""

from __future__ import annotations

import logging
import threading

from .devices import ActuatorState, DeviceKind, apply_command, initial_actuator_state
from .enclave import Mode, command_topic, event_topic
from .envelope import (
    NonceSequence,
    SymmetricKey,
    decrypt,
    envelope_from_json_bytes,
    envelope_to_json_bytes,
    encrypt,
)
from .errors import AuthenticationError, RuleVaultError
from .model import ActionCommand, DeviceEvent, action_from_bytes, event_to_bytes

logger = logging.getLogger(__name__)


class Hub:
    """Holds session keys for its devices and the actuator state register."""

    def __init__(
        self,
        device_keys: dict[str, SymmetricKey],
        mode: Mode = Mode.FULL,
        hub_id: str = "hub-0",
    ):
        self.hub_id = hub_id
        self.mode = Mode(mode)
        self.device_keys = dict(device_keys)
        self.actuators: dict[str, ActuatorState] = {}
        self.rejected_commands = 0
        self.applied_commands = 0
        self._nonces: dict[str, NonceSequence] = {}
        self._lock = threading.Lock()

    def register_actuator(self, device: str, kind: DeviceKind) -> None:
        self.actuators[device] = initial_actuator_state(device, kind)

    def actuator_state(self, device: str) -> ActuatorState | None:
        return self.actuators.get(device)

    def _nonce_seq(self, device: str) -> NonceSequence:
        with self._lock:
            seq = self._nonces.get(device)
            if seq is None:
                seq = NonceSequence(device)
                self._nonces[device] = seq
            return seq

    # -- upstream: device reading -> broker payload -----------------------

    def wrap_upstream(self, event: DeviceEvent) -> tuple[str, bytes]:
        """Return (topic, wire payload) for a local device reading."""
        topic = event_topic(event.device)
        raw = event_to_bytes(event)
        if self.mode is not Mode.FULL:
            return topic, raw
        key = self.device_keys.get(event.device)
        if key is None:
            raise AuthenticationError(f"hub holds no key for device {event.device!r}")
        env = encrypt(
            key,
            raw,
            aad=topic.encode("utf-8"),
            sender=event.device,
            nonce_seq=self._nonce_seq(event.device),
        )
        return topic, envelope_to_json_bytes(env)

    # -- downstream: broker payload -> actuator ---------------------------

    def handle_command(self, topic: str, payload: bytes) -> ActionCommand | None:
        """Verify, decrypt, and execute one command delivery.

        Returns the applied command, or None when the message was rejected;
        rejected messages never touch actuator state.
        """
        try:
            command = self._open_command(topic, payload)
        except RuleVaultError as exc:
            self.rejected_commands += 1
            logger.debug("dropped command on %s: %s", topic, exc)
            return None
        state = self.actuators.get(command.device)
        if state is None:
            self.rejected_commands += 1
            logger.debug("command for unknown actuator %s dropped", command.device)
            return None
        try:
            self.actuators[command.device] = apply_command(state, command)
        except RuleVaultError as exc:
            self.rejected_commands += 1
            logger.debug("command %s rejected by actuator: %s", command.command, exc)
            return None
        self.applied_commands += 1
        return command

    def _open_command(self, topic: str, payload: bytes) -> ActionCommand:
        if self.mode is not Mode.FULL:
            return action_from_bytes(payload)
        env = envelope_from_json_bytes(payload)
        device = topic.split("/", 1)[1] if "/" in topic else ""
        key = self.device_keys.get(device)
        if key is None:
            raise AuthenticationError(f"hub holds no key for topic {topic!r}")
        plaintext = decrypt(key, env, expected_aad=topic.encode("utf-8"))
        command = action_from_bytes(plaintext)
        if command.device != device:
            raise AuthenticationError(
                f"command targets {command.device!r} but arrived on {topic!r}"
            )
        return command

    def command_topics(self) -> list[str]:
        return [command_topic(device) for device in self.actuators]
