"""
End-to-end scenario
===================

One process, the whole system: broker, hub with its actuators and the key
service, the engine behind its trusted boundary, and a presence sensor.
The sensor's reading travels encrypted, the engine decides inside the
boundary, and the resulting commands come back encrypted and change
actuator state. A wire capture shows nothing readable.
"""

import os

from rulevault.config import load_scenario
from rulevault.scenario import ScenarioHarness

scenario_path = os.path.join(os.path.dirname(__file__), "..", "scenarios", "presence.toml")
spec = load_scenario(scenario_path)

with ScenarioHarness(spec, capture=True) as harness:
    devices, rules = harness.provisioned
    print(f"provisioned {rules} rule(s) across {devices} device record(s)")

    harness.run_fleet()  # the presence sensor reports "present"
    harness.wait_for_applied_commands(2)

    print("thermostat:", harness.hub.actuator_state("thermostat-1").as_dict())
    print("switch:    ", harness.hub.actuator_state("switch-1").as_dict())
    print("rejected commands:", harness.hub.rejected_commands)

    # The eavesdropper's view: every frame that crossed the broker.
    captured = b"".join(harness.capture)
    print(f"\ncaptured {len(harness.capture)} frames, {len(captured)} bytes")
    for secret in (b"present", b"cool"):
        verdict = "leaked!" if secret in captured else "not on the wire"
        print(f"  {secret.decode()!r}: {verdict}")

    # Combined execution + transport time, complementing the in-process
    # boundary timings of demos/05: another burst of readings, timed from
    # emission to the last actuator change.
    timing = harness.run_timed(20)
    print(
        f"\nend-to-end: {timing.events} events, {timing.applied_commands} commands "
        f"applied, {timing.mean_per_event_us:.0f}us per event including transport"
    )
