"""One-process scenario composition: broker, hub, key service, engine, fleet.

Used by the demo scripts and integration tests; the same components can
instead run as separate `rulevault run ...` processes against a shared
broker. Besides driving the fleet, the harness can time the combined
execution-plus-transport path (device emission through broker and engine
to actuator apply), complementing the in-process boundary timings of the
benchmark harness.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .attestation import (
    AttestationServer,
    Measurement,
    SessionKeySet,
    default_build_info,
    generate_platform_keypair,
)
from .broker import Broker
from .config import ScenarioSpec, scenario_keys
from .devices import EmissionRecord, run_fleet
from .enclave import Mode
from .errors import ConfigError
from .hub import Hub
from .model import ruleset_to_bytes
from .runtime import EnclaveRunner, HubRunner, provision_rules


@dataclass
class EndToEndTiming:
    """Combined execution and transport time over a fleet run."""

    events: int
    applied_commands: int
    total_wall_s: float

    @property
    def mean_per_event_us(self) -> float:
        return (self.total_wall_s / self.events) * 1e6 if self.events else 0.0


class ScenarioHarness:
    def __init__(self, spec: ScenarioSpec, capture: bool = False, store_path: str | None = None):
        self.spec = spec
        self.device_keys, self.provisioning_key, platform_seed = scenario_keys(spec)
        platform_sk, platform_vk = generate_platform_keypair(platform_seed)
        self.broker = Broker(port=0).start()
        self.capture = self.broker.enable_capture() if capture else None

        self.hub = Hub(self.device_keys, mode=spec.mode, hub_id="hub-0")
        for profile in spec.actuator_profiles():
            self.hub.register_actuator(profile.device, profile.kind)
        attestation = None
        if spec.mode is Mode.FULL:
            attestation = AttestationServer(
                platform_vk,
                Measurement.of(default_build_info()),
                SessionKeySet(
                    device_keys=self.device_keys, provisioning_key=self.provisioning_key
                ),
            )
        self.hub_runner = HubRunner(
            self.broker.host, self.broker.port, self.hub, attestation=attestation
        ).start()
        self.enclave_runner = EnclaveRunner(
            self.broker.host,
            self.broker.port,
            mode=spec.mode,
            platform_signing_key=platform_sk if spec.mode is Mode.FULL else None,
            cache_capacity=spec.cache_capacity,
            cache_policy=spec.cache_policy,
            store_path=store_path,
        ).start()
        self.provisioned = provision_rules(
            self.broker.host,
            self.broker.port,
            ruleset_to_bytes(spec.rules),
            mode=spec.mode,
            provisioning_key=self.provisioning_key if spec.mode is Mode.FULL else None,
        )

    def run_fleet(self, events: int | None = None) -> list[EmissionRecord]:
        count = events if events is not None else self.spec.events
        return run_fleet(
            self.spec.sensor_profiles(),
            count,
            send=self.hub_runner.publish_event,
            seed=self.spec.seed,
        )

    def run_timed(self, events: int | None = None, settle_timeout: float = 30.0) -> EndToEndTiming:
        """Drive the fleet and time emission through to actuator quiescence.

        The clock covers device-side encryption, both broker hops, the
        boundary, and command application; it stops once no further
        command lands for a settle interval.
        """
        count = events if events is not None else self.spec.events
        baseline = self.hub.applied_commands
        start = time.perf_counter()
        self.run_fleet(count)
        deadline = time.monotonic() + settle_timeout
        last_applied = self.hub.applied_commands
        last_change = time.monotonic()
        end = time.perf_counter()
        while time.monotonic() < deadline:
            applied = self.hub.applied_commands
            if applied != last_applied:
                last_applied = applied
                last_change = time.monotonic()
                end = time.perf_counter()
            elif time.monotonic() - last_change > 0.25:
                break
            time.sleep(0.01)
        return EndToEndTiming(
            events=count,
            applied_commands=self.hub.applied_commands - baseline,
            total_wall_s=end - start,
        )

    def wait_for_applied_commands(self, count: int, timeout: float = 5.0) -> int:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.hub.applied_commands >= count:
                return self.hub.applied_commands
            time.sleep(0.01)
        raise ConfigError(
            f"expected {count} applied commands, saw {self.hub.applied_commands} "
            f"within {timeout}s"
        )

    def stop(self) -> None:
        self.enclave_runner.stop()
        self.hub_runner.stop()
        self.broker.stop()

    def __enter__(self) -> "ScenarioHarness":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()
