"""Brute-force plaintext oracle for the whole engine pipeline.

Re-implements the firing semantics with nested loops over ALL rules per
event: no grouping, no cache, no store, no crypto. Used to check the
boundary's fired-action multiset, so it must stay independent of the
engine's own evaluation helpers.
"""

from collections import Counter

from rulevault.enclave import Mode
from rulevault.envelope import decrypt, envelope_from_json_bytes
from rulevault.model import action_from_bytes


def _naive_compare(op_name, left, right):
    def kind(v):
        if isinstance(v, bool):
            return "bool"
        if isinstance(v, (int, float)):
            return "num"
        return "str"

    if op_name == "equals":
        return kind(left) == kind(right) and left == right
    if kind(left) != "num" or kind(right) != "num":
        return False
    return {
        "greater_than": left > right,
        "less_than": left < right,
        "greater_than_or_equals": left >= right,
        "less_than_or_equals": left <= right,
    }[op_name]


def normalize_action(action) -> tuple:
    return (action.device, action.capability, action.command, tuple(action.arguments))


def naive_fired_multiset(rules, events) -> Counter:
    """Multiset of commands the ruleset should fire over the event stream."""
    last_values = {}
    fired = Counter()
    for event in events:
        last_values[(event.device, event.attribute)] = event.value
        for rule in rules:
            touches_event_device = False
            for cond in rule.conditions:
                if cond.device == event.device:
                    touches_event_device = True
            if not touches_event_device:
                continue
            verdicts = []
            for cond in rule.conditions:
                value = last_values.get((cond.device, cond.attribute))
                if value is None:
                    verdicts.append(False)
                else:
                    verdicts.append(_naive_compare(cond.operator.value, value, cond.value))
            if rule.combinator.value == "all":
                ok = all(verdicts)
            else:
                ok = any(verdicts)
            if ok:
                for action in rule.actions:
                    fired[normalize_action(action)] += 1
    return fired


def decode_outputs(outputs, mode, device_keys=None) -> list[tuple]:
    """Normalize boundary outputs to comparable action tuples."""
    if mode is Mode.PLAIN:
        return [normalize_action(a) for a in outputs]
    decoded = []
    for topic, payload in outputs:
        if mode is Mode.TRUSTED_NO_ENC:
            decoded.append(normalize_action(action_from_bytes(payload)))
        else:
            env = envelope_from_json_bytes(payload)
            plaintext = decrypt(device_keys[env.key_id], env, expected_aad=topic.encode())
            decoded.append(normalize_action(action_from_bytes(plaintext)))
    return decoded
