"""Simulated IoT devices: sensor profiles, actuator state, fleet driver.

Sensors own a seeded value generator; actuators own a state register that
changes only through apply_command. The air-quality profile cycles through
its temperature / humidity / CO2 channels, one reading per emission.
"""

from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

from .errors import CommandTargetMismatch, InvalidConfig, UnknownCommand
from .model import ActionCommand, DeviceEvent, Scalar, check_device_id


class DeviceKind(str, Enum):
    PRESENCE = "presence"
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    CO2 = "co2"
    AIR_QUALITY = "air_quality"
    SWITCH = "switch"
    BULB = "bulb"
    THERMOSTAT = "thermostat"


SENSOR_KINDS = frozenset(
    {
        DeviceKind.PRESENCE,
        DeviceKind.TEMPERATURE,
        DeviceKind.HUMIDITY,
        DeviceKind.CO2,
        DeviceKind.AIR_QUALITY,
    }
)
ACTUATOR_KINDS = frozenset({DeviceKind.SWITCH, DeviceKind.BULB, DeviceKind.THERMOSTAT})

# (capability, attribute) channels emitted by each sensor kind
KIND_CHANNELS: dict[DeviceKind, tuple[tuple[str, str], ...]] = {
    DeviceKind.PRESENCE: (("presenceSensor", "presence"),),
    DeviceKind.TEMPERATURE: (("temperatureMeasurement", "temperature"),),
    DeviceKind.HUMIDITY: (("humidityMeasurement", "humidity"),),
    DeviceKind.CO2: (("carbonDioxideMeasurement", "co2"),),
    DeviceKind.AIR_QUALITY: (
        ("airQualityMonitor", "temperature"),
        ("airQualityMonitor", "humidity"),
        ("airQualityMonitor", "co2"),
    ),
}

DEFAULT_ACTUATOR_STATE: dict[DeviceKind, dict[str, Scalar]] = {
    DeviceKind.SWITCH: {"switch": "off"},
    DeviceKind.BULB: {"switch": "off", "level": 0},
    DeviceKind.THERMOSTAT: {"mode": "idle"},
}


@dataclass(frozen=True)
class ConstantValue:
    value: Scalar

    def sample(self, rng: random.Random, index: int) -> Scalar:
        return self.value


@dataclass(frozen=True)
class UniformRange:
    low: float
    high: float
    integer: bool = True

    def sample(self, rng: random.Random, index: int) -> Scalar:
        if self.integer:
            return rng.randint(int(self.low), int(self.high))
        return rng.uniform(self.low, self.high)


@dataclass(frozen=True)
class TraceValues:
    """Replays recorded values verbatim, wrapping at the end."""

    values: tuple[Scalar, ...]

    @classmethod
    def from_file(cls, path: str) -> "TraceValues":
        values: list[Scalar] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                values.append(_parse_trace_value(line))
        if not values:
            raise InvalidConfig(f"trace file {path} holds no values")
        return cls(tuple(values))

    def sample(self, rng: random.Random, index: int) -> Scalar:
        return self.values[index % len(self.values)]


def _parse_trace_value(text: str) -> Scalar:
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


ValueGenerator = ConstantValue | UniformRange | TraceValues


@dataclass(frozen=True)
class DeviceProfile:
    device: str
    kind: DeviceKind
    emit_period: float = 0.0
    generator: ValueGenerator | None = None

    def __post_init__(self) -> None:
        check_device_id(self.device, "profile")
        if self.kind in SENSOR_KINDS and self.generator is None:
            raise InvalidConfig(f"sensor profile {self.device} needs a value generator")
        if self.kind in ACTUATOR_KINDS and self.generator is not None:
            raise InvalidConfig(f"actuator profile {self.device} has no generator")

    @property
    def is_sensor(self) -> bool:
        return self.kind in SENSOR_KINDS


def now_us() -> int:
    return time.time_ns() // 1000


def make_event(
    profile: DeviceProfile, rng: random.Random, index: int, timestamp_us: int | None = None
) -> DeviceEvent:
    """Build this profile's next reading; index counts the profile's emissions."""
    channels = KIND_CHANNELS[profile.kind]
    capability, attribute = channels[index % len(channels)]
    return DeviceEvent(
        device=profile.device,
        capability=capability,
        attribute=attribute,
        value=profile.generator.sample(rng, index),
        timestamp=timestamp_us if timestamp_us is not None else now_us(),
    )


# ---------------------------------------------------------------------------
# Actuators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActuatorState:
    device: str
    attributes: tuple[tuple[str, Scalar], ...] = ()
    last_command_at: int = 0

    def get(self, attribute: str) -> Scalar | None:
        for name, value in self.attributes:
            if name == attribute:
                return value
        return None

    def as_dict(self) -> dict[str, Scalar]:
        return dict(self.attributes)


def initial_actuator_state(device: str, kind: DeviceKind) -> ActuatorState:
    defaults = DEFAULT_ACTUATOR_STATE.get(kind, {})
    return ActuatorState(device=device, attributes=tuple(defaults.items()))


def _with_attributes(state: ActuatorState, updates: dict[str, Scalar], at_us: int) -> ActuatorState:
    merged = state.as_dict()
    merged.update(updates)
    return ActuatorState(
        device=state.device, attributes=tuple(merged.items()), last_command_at=at_us
    )


def apply_command(state: ActuatorState, cmd: ActionCommand, at_us: int | None = None) -> ActuatorState:
    """Apply a verified command; returns the successor state.

    Raises CommandTargetMismatch when the command addresses another device
    and UnknownCommand for anything outside the command table.
    """
    if cmd.device != state.device:
        raise CommandTargetMismatch(
            f"command for {cmd.device!r} applied to actuator {state.device!r}"
        )
    at_us = at_us if at_us is not None else now_us()
    args = cmd.arguments
    if cmd.command == "on":
        return _with_attributes(state, {"switch": "on"}, at_us)
    if cmd.command == "off":
        return _with_attributes(state, {"switch": "off"}, at_us)
    if cmd.command == "setMode" and args:
        return _with_attributes(state, {"mode": args[0]}, at_us)
    if cmd.command == "setLevel" and args:
        return _with_attributes(state, {"level": args[0]}, at_us)
    if cmd.command == "setColor" and args:
        return _with_attributes(state, {"color": args[0]}, at_us)
    if cmd.command == "notify":
        return _with_attributes(state, {"notification": args[0] if args else ""}, at_us)
    raise UnknownCommand(f"device {state.device!r} cannot execute {cmd.command!r}")


# ---------------------------------------------------------------------------
# Fleet driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmissionRecord:
    device: str
    attribute: str
    value: Scalar
    sent_us: int


def run_fleet(
    profiles: Sequence[DeviceProfile],
    event_count: int,
    send: Callable[[DeviceEvent], None],
    seed: int = 0,
    pace: bool = False,
) -> list[EmissionRecord]:
    """Emit exactly event_count sensor events round-robin across profiles.

    send() receives each event in order; errors from it (for example
    BrokerUnreachable) propagate. With pace=True the driver sleeps each
    profile's emit_period after its emission.
    """
    sensors = [p for p in profiles if p.is_sensor]
    if event_count < 0:
        raise InvalidConfig("event_count must be >= 0")
    if event_count and not sensors:
        raise InvalidConfig("no sensor profiles to emit from")
    rng = random.Random(seed)
    per_profile_index = {p.device: 0 for p in sensors}
    log: list[EmissionRecord] = []
    for i in range(event_count):
        profile = sensors[i % len(sensors)]
        index = per_profile_index[profile.device]
        per_profile_index[profile.device] = index + 1
        event = make_event(profile, rng, index)
        send(event)
        log.append(
            EmissionRecord(
                device=event.device,
                attribute=event.attribute,
                value=event.value,
                sent_us=event.timestamp,
            )
        )
        if pace and profile.emit_period > 0:
            time.sleep(profile.emit_period)
    return log


def emission_log_to_csv(records: Iterable[EmissionRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["device", "attribute", "value", "sent_us"])
    for rec in records:
        writer.writerow([rec.device, rec.attribute, rec.value, rec.sent_us])
    return out.getvalue()
