"""Device profiles, generators, actuator command semantics, fleet driver."""

import collections

import pytest

from rulevault.devices import (
    ConstantValue,
    DeviceKind,
    DeviceProfile,
    TraceValues,
    UniformRange,
    apply_command,
    emission_log_to_csv,
    initial_actuator_state,
    make_event,
    run_fleet,
)
from rulevault.errors import (
    CommandTargetMismatch,
    InvalidConfig,
    UnknownCommand,
)
from rulevault.model import ActionCommand

import random


def _sensor(device="s1", kind=DeviceKind.TEMPERATURE, generator=None):
    return DeviceProfile(
        device=device, kind=kind, generator=generator or UniformRange(0, 100)
    )


class TestProfiles:
    def test_sensor_requires_generator(self):
        with pytest.raises(InvalidConfig):
            DeviceProfile(device="s1", kind=DeviceKind.CO2)

    def test_actuator_refuses_generator(self):
        with pytest.raises(InvalidConfig):
            DeviceProfile(device="b1", kind=DeviceKind.BULB, generator=ConstantValue(1))

    def test_air_quality_cycles_channels(self):
        profile = _sensor(kind=DeviceKind.AIR_QUALITY)
        rng = random.Random(0)
        attrs = [make_event(profile, rng, i, timestamp_us=i).attribute for i in range(6)]
        assert attrs == ["temperature", "humidity", "co2"] * 2

    def test_trace_generator_replays_verbatim(self):
        profile = _sensor(generator=TraceValues(("present", "not present", 42)))
        rng = random.Random(0)
        values = [make_event(profile, rng, i, timestamp_us=i).value for i in range(5)]
        assert values == ["present", "not present", 42, "present", "not present"]

    def test_trace_file_loading(self, tmp_path):
        path = tmp_path / "readings.txt"
        path.write_text("# recorded\n21.5\n22\ntrue\nopen\n")
        trace = TraceValues.from_file(str(path))
        assert trace.values == (21.5, 22, True, "open")

    def test_uniform_range_seeded_reproducible(self):
        profile = _sensor()
        a = [make_event(profile, random.Random(5), i, timestamp_us=i).value for i in range(10)]
        b = [make_event(profile, random.Random(5), i, timestamp_us=i).value for i in range(10)]
        assert a == b


class TestActuators:
    def test_bulb_off_then_on(self):
        state = initial_actuator_state("bulb-1", DeviceKind.BULB)
        assert state.get("switch") == "off"
        updated = apply_command(state, ActionCommand("bulb-1", "switch", "on"), at_us=99)
        assert updated.get("switch") == "on"
        assert updated.last_command_at == 99
        assert state.get("switch") == "off"  # input state unchanged

    def test_thermostat_set_mode_cool(self):
        state = initial_actuator_state("t-1", DeviceKind.THERMOSTAT)
        updated = apply_command(state, ActionCommand("t-1", "thermostatMode", "setMode", ("cool",)))
        assert updated.get("mode") == "cool"

    def test_command_for_other_device(self):
        state = initial_actuator_state("b1", DeviceKind.BULB)
        with pytest.raises(CommandTargetMismatch):
            apply_command(state, ActionCommand("b2", "switch", "on"))

    def test_unknown_command(self):
        state = initial_actuator_state("b1", DeviceKind.BULB)
        with pytest.raises(UnknownCommand):
            apply_command(state, ActionCommand("b1", "switch", "explode"))

    def test_set_level_and_notify(self):
        state = initial_actuator_state("b1", DeviceKind.BULB)
        state = apply_command(state, ActionCommand("b1", "switchLevel", "setLevel", (70,)))
        assert state.get("level") == 70
        state = apply_command(state, ActionCommand("b1", "notify", "notify", ("door open",)))
        assert state.get("notification") == "door open"


class TestFleet:
    def test_32_devices_10000_events_round_robin(self):
        profiles = [_sensor(device=f"s{i:02d}") for i in range(32)]
        log = run_fleet(profiles, 10_000, send=lambda e: None, seed=1)
        assert len(log) == 10_000
        counts = collections.Counter(rec.device for rec in log)
        assert set(counts.values()) <= {312, 313}
        assert max(counts.values()) - min(counts.values()) <= 1

    def test_zero_events_empty_log(self):
        log = run_fleet([_sensor()], 0, send=lambda e: None)
        assert log == []

    def test_send_errors_propagate(self):
        def boom(event):
            raise InvalidConfig("unreachable")

        with pytest.raises(InvalidConfig):
            run_fleet([_sensor()], 3, send=boom)

    def test_reproducible_from_seed(self):
        profiles = [_sensor(device=f"s{i}") for i in range(3)]
        a = [rec.value for rec in run_fleet(profiles, 30, send=lambda e: None, seed=9)]
        b = [rec.value for rec in run_fleet(profiles, 30, send=lambda e: None, seed=9)]
        assert a == b

    def test_emission_csv_format(self):
        log = run_fleet([_sensor(generator=ConstantValue(7))], 2, send=lambda e: None)
        text = emission_log_to_csv(log)
        lines = text.strip().splitlines()
        assert lines[0] == "device,attribute,value,sent_us"
        assert lines[1].startswith("s1,temperature,7,")
        assert len(lines) == 3

    def test_actuators_do_not_emit(self):
        profiles = [
            _sensor(),
            DeviceProfile(device="b1", kind=DeviceKind.BULB),
        ]
        log = run_fleet(profiles, 10, send=lambda e: None)
        assert all(rec.device == "s1" for rec in log)
