"""
Rules and events
================

Parse a trigger-action rule, feed it device readings, watch it fire.
"""

import json

from rulevault.model import evaluate_rule, parse_event, parse_rule

# A rule is "if these conditions hold, send these commands". This one
# reacts to a presence sensor.
rule = parse_rule(
    json.dumps(
        {
            "id": "demo-presence",
            "name": "cool the room when someone is home",
            "if": [
                {
                    "device": "presence-1",
                    "attribute": "presence",
                    "operator": "equals",
                    "value": "present",
                }
            ],
            "then": [
                {
                    "device": "thermostat-1",
                    "capability": "thermostatMode",
                    "command": "setMode",
                    "arguments": ["cool"],
                },
                {"device": "switch-1", "capability": "switch", "command": "on"},
            ],
        }
    )
)
print(f"rule {rule.id!r}: {len(rule.conditions)} condition(s), {len(rule.actions)} action(s)")

# A matching reading releases the actions, in declaration order.
reading = parse_event(
    b'{"device":"presence-1","capability":"presenceSensor",'
    b'"attribute":"presence","value":"present","timestamp":1700000000000000}'
)
for command in evaluate_rule(rule, reading):
    print(f"  fire -> {command.device}: {command.command} {list(command.arguments)}")

# A non-matching reading releases nothing.
away = parse_event(
    b'{"device":"presence-1","capability":"presenceSensor",'
    b'"attribute":"presence","value":"not present","timestamp":1700000000000001}'
)
print("away reading fires:", evaluate_rule(rule, away))

# Comparison is type-strict: the string "90" is not the number 90.
threshold = parse_rule(
    json.dumps(
        {
            "id": "demo-threshold",
            "name": "warn when hot",
            "if": [
                {
                    "device": "temp-1",
                    "attribute": "temperature",
                    "operator": "greater_than",
                    "value": 85,
                }
            ],
            "then": [{"device": "bulb-1", "capability": "notify", "command": "notify", "arguments": ["hot"]}],
        }
    )
)
hot = parse_event(
    b'{"device":"temp-1","capability":"t","attribute":"temperature","value":90,"timestamp":2}'
)
hot_as_string = parse_event(
    b'{"device":"temp-1","capability":"t","attribute":"temperature","value":"90","timestamp":3}'
)
print("numeric 90 fires:", bool(evaluate_rule(threshold, hot)))
print('string "90" fires:', bool(evaluate_rule(threshold, hot_as_string)))
