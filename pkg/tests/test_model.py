"""Rule/event model: parsing, matching, evaluation vs a naive oracle."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulevault.errors import MessageSyntaxError, SchemaError
from rulevault.model import (
    ActionCommand,
    Combinator,
    Condition,
    DeviceEvent,
    Operator,
    Rule,
    evaluate_rule,
    event_to_bytes,
    match_condition,
    parse_event,
    parse_rule,
    parse_ruleset,
    rule_to_bytes,
)

PRESENCE_RULE_JSON = json.dumps(
    {
        "id": "rule-1",
        "name": "presence comfort",
        "if": [
            {
                "device": "presence-1",
                "attribute": "presence",
                "operator": "equals",
                "value": "present",
            }
        ],
        "combinator": "all",
        "then": [
            {
                "device": "thermostat-1",
                "capability": "thermostatMode",
                "command": "setMode",
                "arguments": ["cool"],
            },
            {"device": "switch-1", "capability": "switch", "command": "on", "arguments": []},
        ],
    }
).encode()

PRESENCE_EVENT_JSON = json.dumps(
    {
        "device": "presence-1",
        "capability": "presenceSensor",
        "attribute": "presence",
        "value": "present",
        "timestamp": 1_700_000_000_000_000,
    }
).encode()


class TestParseRule:
    def test_presence_rule(self):
        rule = parse_rule(PRESENCE_RULE_JSON)
        assert len(rule.conditions) == 1
        assert len(rule.actions) == 2
        assert rule.combinator is Combinator.ALL
        assert rule.actions[0].command == "setMode"
        assert rule.actions[0].arguments == ("cool",)
        assert rule.actions[1].device == "switch-1"

    def test_empty_object_is_schema_error(self):
        with pytest.raises(SchemaError):
            parse_rule(b"{}")

    def test_numeric_operator_with_string_value(self):
        obj = json.loads(PRESENCE_RULE_JSON)
        obj["if"][0]["operator"] = "greater_than"
        obj["if"][0]["value"] = "hot"
        with pytest.raises(SchemaError):
            parse_rule(json.dumps(obj).encode())

    def test_malformed_json(self):
        with pytest.raises(MessageSyntaxError):
            parse_rule(b"{not json")

    def test_invalid_utf8(self):
        with pytest.raises(MessageSyntaxError):
            parse_rule(b"\xff\xfe{}")

    def test_unknown_fields_ignored(self):
        obj = json.loads(PRESENCE_RULE_JSON)
        obj["extra"] = {"nested": True}
        obj["if"][0]["note"] = "ignored"
        rule = parse_rule(json.dumps(obj).encode())
        assert rule.id == "rule-1"

    def test_empty_conditions_rejected(self):
        obj = json.loads(PRESENCE_RULE_JSON)
        obj["if"] = []
        with pytest.raises(SchemaError):
            parse_rule(json.dumps(obj).encode())

    def test_empty_actions_rejected(self):
        obj = json.loads(PRESENCE_RULE_JSON)
        obj["then"] = []
        with pytest.raises(SchemaError):
            parse_rule(json.dumps(obj).encode())

    def test_combinator_defaults_to_all(self):
        obj = json.loads(PRESENCE_RULE_JSON)
        del obj["combinator"]
        assert parse_rule(json.dumps(obj).encode()).combinator is Combinator.ALL

    def test_unknown_operator(self):
        obj = json.loads(PRESENCE_RULE_JSON)
        obj["if"][0]["operator"] = "matches"
        with pytest.raises(SchemaError):
            parse_rule(json.dumps(obj).encode())

    def test_device_id_too_long(self):
        obj = json.loads(PRESENCE_RULE_JSON)
        obj["if"][0]["device"] = "x" * 129
        with pytest.raises(SchemaError):
            parse_rule(json.dumps(obj).encode())

    def test_ruleset_duplicate_ids(self):
        rules = [json.loads(PRESENCE_RULE_JSON), json.loads(PRESENCE_RULE_JSON)]
        with pytest.raises(SchemaError):
            parse_ruleset(json.dumps(rules).encode())


class TestParseEvent:
    def test_presence_event(self):
        event = parse_event(PRESENCE_EVENT_JSON)
        assert event.attribute == "presence"
        assert event.value == "present"

    def test_missing_device(self):
        obj = json.loads(PRESENCE_EVENT_JSON)
        del obj["device"]
        with pytest.raises(SchemaError):
            parse_event(json.dumps(obj).encode())

    def test_numeric_temperature_event(self):
        obj = {
            "device": "thermo-1",
            "capability": "temperatureMeasurement",
            "attribute": "temperature",
            "value": 90,
            "timestamp": 12,
        }
        event = parse_event(json.dumps(obj).encode())
        assert event.value == 90
        assert isinstance(event.value, int)

    def test_negative_timestamp(self):
        obj = json.loads(PRESENCE_EVENT_JSON)
        obj["timestamp"] = -1
        with pytest.raises(SchemaError):
            parse_event(json.dumps(obj).encode())

    def test_null_value_rejected(self):
        obj = json.loads(PRESENCE_EVENT_JSON)
        obj["value"] = None
        with pytest.raises(SchemaError):
            parse_event(json.dumps(obj).encode())


def _event(device="presence-1", attribute="presence", value="present", ts=1):
    return DeviceEvent(
        device=device, capability="cap", attribute=attribute, value=value, timestamp=ts
    )


class TestMatchCondition:
    def test_equals_present(self):
        cond = Condition("presence-1", "presence", Operator.EQUALS, "present")
        assert match_condition(cond, _event()) is True

    def test_other_device_is_false(self):
        cond = Condition("presence-1", "presence", Operator.EQUALS, "present")
        assert match_condition(cond, _event(device="presence-2")) is False

    def test_other_attribute_is_false(self):
        cond = Condition("presence-1", "presence", Operator.EQUALS, "present")
        assert match_condition(cond, _event(attribute="motion")) is False

    def test_greater_than_95_vs_90(self):
        # oracle: direct numeric comparison, 90 > 95 is False
        cond = Condition("t-1", "temperature", Operator.GREATER_THAN, 95)
        assert match_condition(cond, _event("t-1", "temperature", 90)) is False
        assert match_condition(cond, _event("t-1", "temperature", 96)) is True

    def test_numeric_operator_on_string_event_value(self):
        cond = Condition("t-1", "temperature", Operator.LESS_THAN, 50)
        assert match_condition(cond, _event("t-1", "temperature", "cold")) is False

    def test_equals_is_type_strict(self):
        cond = Condition("t-1", "temperature", Operator.EQUALS, 90)
        assert match_condition(cond, _event("t-1", "temperature", "90")) is False
        assert match_condition(cond, _event("t-1", "temperature", 90)) is True

    def test_bool_is_not_a_number(self):
        cond = Condition("d-1", "flag", Operator.EQUALS, True)
        assert match_condition(cond, _event("d-1", "flag", True)) is True
        assert match_condition(cond, _event("d-1", "flag", 1)) is False
        numeric = Condition("d-1", "flag", Operator.LESS_THAN, 2)
        assert match_condition(numeric, _event("d-1", "flag", True)) is False

    def test_int_float_cross_kind_equality(self):
        cond = Condition("t-1", "temperature", Operator.EQUALS, 90)
        assert match_condition(cond, _event("t-1", "temperature", 90.0)) is True


# ---------------------------------------------------------------------------
# Naive oracle: re-implements matching with nested loops, no shared helpers
# ---------------------------------------------------------------------------


def _naive_compare(operator, left, right):
    def kind(v):
        if isinstance(v, bool):
            return "bool"
        if isinstance(v, (int, float)):
            return "num"
        return "str"

    if operator == "equals":
        return kind(left) == kind(right) and left == right
    if kind(left) != "num" or kind(right) != "num":
        return False
    if operator == "greater_than":
        return left > right
    if operator == "less_than":
        return left < right
    if operator == "greater_than_or_equals":
        return left >= right
    if operator == "less_than_or_equals":
        return left <= right
    raise AssertionError(operator)


def naive_evaluate(rule, event):
    verdicts = []
    for cond in rule.conditions:
        hit = False
        if cond.device == event.device and cond.attribute == event.attribute:
            hit = _naive_compare(cond.operator.value, event.value, cond.value)
        verdicts.append(hit)
    fired = all(verdicts) if rule.combinator.value == "all" else any(verdicts)
    return list(rule.actions) if fired else []


def _random_rule(rng, devices, attributes, values):
    conditions = tuple(
        Condition(
            device=rng.choice(devices),
            attribute=rng.choice(attributes),
            operator=rng.choice(list(Operator)),
            value=rng.choice(values["numeric"]),
        )
        if rng.random() < 0.7
        else Condition(
            device=rng.choice(devices),
            attribute=rng.choice(attributes),
            operator=Operator.EQUALS,
            value=rng.choice(values["any"]),
        )
        for _ in range(rng.randint(1, 3))
    )
    actions = tuple(
        ActionCommand(device=rng.choice(devices), capability="cap", command="set")
        for _ in range(rng.randint(1, 2))
    )
    return Rule(
        id=f"r{rng.randrange(10**9)}",
        name="randomized",
        conditions=conditions,
        actions=actions,
        combinator=rng.choice([Combinator.ALL, Combinator.ANY]),
    )


def test_evaluate_rule_matches_naive_oracle_on_10000_instances():
    rng = random.Random(20260810)
    devices = ["d1", "d2", "d3"]
    attributes = ["a", "b"]
    values = {"numeric": [0, 1, 5, 10, 3.5], "any": [0, 1, "x", "y", True, False, 2.5]}
    for _ in range(10000):
        rule = _random_rule(rng, devices, attributes, values)
        event = DeviceEvent(
            device=rng.choice(devices),
            capability="cap",
            attribute=rng.choice(attributes),
            value=rng.choice(values["any"]),
            timestamp=rng.randrange(10**12),
        )
        assert evaluate_rule(rule, event) == naive_evaluate(rule, event)


class TestEvaluateRule:
    def test_presence_rule_fires_both_actions_in_order(self):
        rule = parse_rule(PRESENCE_RULE_JSON)
        actions = evaluate_rule(rule, _event())
        assert [a.device for a in actions] == ["thermostat-1", "switch-1"]

    def test_not_present_fires_nothing(self):
        rule = parse_rule(PRESENCE_RULE_JSON)
        assert evaluate_rule(rule, _event(value="not present")) == []

    def test_rule_not_modified(self):
        rule = parse_rule(PRESENCE_RULE_JSON)
        before = rule_to_bytes(rule)
        evaluate_rule(rule, _event())
        assert rule_to_bytes(rule) == before

    def test_determinism(self):
        rule = parse_rule(PRESENCE_RULE_JSON)
        event = _event()
        assert evaluate_rule(rule, event) == evaluate_rule(rule, event)

    def test_any_combinator(self):
        rule = Rule(
            id="r",
            name="any",
            conditions=(
                Condition("d1", "a", Operator.EQUALS, "no"),
                Condition("d1", "a", Operator.EQUALS, "yes"),
            ),
            actions=(ActionCommand("d2", "cap", "on"),),
            combinator=Combinator.ANY,
        )
        assert evaluate_rule(rule, _event("d1", "a", "yes")) != []
        assert evaluate_rule(rule, _event("d1", "a", "maybe")) == []


# ---------------------------------------------------------------------------
# Round trips and properties
# ---------------------------------------------------------------------------

_scalars = st.one_of(
    st.text(max_size=12),
    st.integers(min_value=-(10**6), max_value=10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.booleans(),
)
_device_ids = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Nd")), min_size=1, max_size=16
)


@st.composite
def _rules(draw):
    numeric_ops = [
        Operator.GREATER_THAN,
        Operator.LESS_THAN,
        Operator.GREATER_THAN_OR_EQUALS,
        Operator.LESS_THAN_OR_EQUALS,
    ]
    conditions = []
    for _ in range(draw(st.integers(1, 3))):
        operator = draw(st.sampled_from(list(Operator)))
        if operator in numeric_ops:
            value = draw(st.integers(-100, 100) | st.floats(-100, 100, allow_nan=False))
        else:
            value = draw(_scalars)
        conditions.append(
            Condition(
                device=draw(_device_ids),
                attribute=draw(st.text(min_size=1, max_size=8)),
                operator=operator,
                value=value,
            )
        )
    actions = [
        ActionCommand(
            device=draw(_device_ids),
            capability=draw(st.text(max_size=8)),
            command=draw(st.text(min_size=1, max_size=8)),
            arguments=tuple(draw(st.lists(_scalars, max_size=3))),
        )
        for _ in range(draw(st.integers(1, 2)))
    ]
    return Rule(
        id=draw(_device_ids),
        name=draw(st.text(max_size=16)),
        conditions=tuple(conditions),
        actions=tuple(actions),
        combinator=draw(st.sampled_from([Combinator.ALL, Combinator.ANY])),
    )


@settings(max_examples=200, deadline=None)
@given(_rules())
def test_rule_serialize_parse_round_trip(rule):
    assert parse_rule(rule_to_bytes(rule)) == rule


@settings(max_examples=200, deadline=None)
@given(
    _device_ids,
    st.text(min_size=1, max_size=8),
    _scalars,
    st.integers(min_value=0, max_value=2**53),
)
def test_event_serialize_parse_round_trip(device, attribute, value, ts):
    event = DeviceEvent(
        device=device, capability="cap", attribute=attribute, value=value, timestamp=ts
    )
    assert parse_event(event_to_bytes(event)) == event


def test_order_preservation_many_actions():
    actions = tuple(ActionCommand(f"dev{i}", "cap", "on") for i in range(10))
    rule = Rule(
        id="r",
        name="ordered",
        conditions=(Condition("s", "a", Operator.EQUALS, 1),),
        actions=actions,
    )
    fired = evaluate_rule(rule, _event("s", "a", 1))
    assert fired == list(actions)
