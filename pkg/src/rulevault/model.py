"""Trigger-action rule and device-event model.

Wire schema (UTF-8 JSON, documented in docs/wire-format.md):

  rule:  {"id": str, "name": str, "if": [condition, ...],
          "combinator": "all" | "any", "then": [action, ...]}
  condition: {"device": str, "attribute": str, "operator": str, "value": scalar}
  action:    {"device": str, "capability": str, "command": str, "arguments": [scalar, ...]}
  event:     {"device": str, "capability": str, "attribute": str,
              "value": scalar, "timestamp": int microseconds}

Scalars are strings, numbers, or booleans. Comparison is type-strict: a
string never equals a number, a boolean never equals 0/1. Unknown JSON
fields are ignored on parse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Union

from .errors import MessageSyntaxError, SchemaError

Scalar = Union[str, int, float, bool]

MAX_DEVICE_ID_BYTES = 128
RULE_SCHEMA_VERSION = 1


class Operator(str, Enum):
    EQUALS = "equals"
    GREATER_THAN = "greater_than"
    LESS_THAN = "less_than"
    GREATER_THAN_OR_EQUALS = "greater_than_or_equals"
    LESS_THAN_OR_EQUALS = "less_than_or_equals"


NUMERIC_OPERATORS = frozenset(
    {
        Operator.GREATER_THAN,
        Operator.LESS_THAN,
        Operator.GREATER_THAN_OR_EQUALS,
        Operator.LESS_THAN_OR_EQUALS,
    }
)


class Combinator(str, Enum):
    ALL = "all"
    ANY = "any"


def is_scalar(value: Any) -> bool:
    return isinstance(value, (str, int, float, bool))


def is_number(value: Any) -> bool:
    # bool is an int subclass; booleans are their own scalar kind here
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def scalar_kind(value: Scalar) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    raise SchemaError(f"not a scalar: {value!r}")


def scalars_equal(a: Scalar, b: Scalar) -> bool:
    """Type-strict equality: mixed scalar kinds never compare equal."""
    if scalar_kind(a) != scalar_kind(b):
        return False
    return a == b


def check_device_id(value: Any, context: str = "device") -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{context}: device id must be a non-empty string")
    if len(value.encode("utf-8")) > MAX_DEVICE_ID_BYTES:
        raise SchemaError(f"{context}: device id exceeds {MAX_DEVICE_ID_BYTES} bytes")
    return value


@dataclass(frozen=True)
class DeviceEvent:
    """One attribute reading or state report from a device."""

    device: str
    capability: str
    attribute: str
    value: Scalar
    timestamp: int

    def __post_init__(self) -> None:
        check_device_id(self.device, "event")
        if not isinstance(self.capability, str):
            raise SchemaError("event: capability must be a string")
        if not isinstance(self.attribute, str) or not self.attribute:
            raise SchemaError("event: attribute must be a non-empty string")
        if not is_scalar(self.value):
            raise SchemaError("event: value must be a string, number, or boolean")
        if not isinstance(self.timestamp, int) or isinstance(self.timestamp, bool):
            raise SchemaError("event: timestamp must be an integer")
        if self.timestamp < 0:
            raise SchemaError("event: timestamp must be >= 0")


@dataclass(frozen=True)
class Condition:
    """A single trigger clause: compare one device attribute against a value."""

    device: str
    attribute: str
    operator: Operator
    value: Scalar

    def __post_init__(self) -> None:
        check_device_id(self.device, "condition")
        if not isinstance(self.attribute, str) or not self.attribute:
            raise SchemaError("condition: attribute must be a non-empty string")
        if not isinstance(self.operator, Operator):
            raise SchemaError(f"condition: unknown operator {self.operator!r}")
        if not is_scalar(self.value):
            raise SchemaError("condition: value must be a string, number, or boolean")
        if self.operator in NUMERIC_OPERATORS and not is_number(self.value):
            raise SchemaError(
                f"condition: operator {self.operator.value} requires a numeric value"
            )


@dataclass(frozen=True)
class ActionCommand:
    """A command dispatched to a device actuator when a rule fires."""

    device: str
    capability: str
    command: str
    arguments: tuple[Scalar, ...] = ()

    def __post_init__(self) -> None:
        check_device_id(self.device, "action")
        if not isinstance(self.capability, str):
            raise SchemaError("action: capability must be a string")
        if not isinstance(self.command, str) or not self.command:
            raise SchemaError("action: command must be a non-empty string")
        if not isinstance(self.arguments, tuple):
            object.__setattr__(self, "arguments", tuple(self.arguments))
        for arg in self.arguments:
            if not is_scalar(arg):
                raise SchemaError("action: arguments must be scalars")


@dataclass(frozen=True)
class Rule:
    """Trigger conditions plus the action commands they release."""

    id: str
    name: str
    conditions: tuple[Condition, ...]
    actions: tuple[ActionCommand, ...]
    combinator: Combinator = Combinator.ALL

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise SchemaError("rule: id must be a non-empty string")
        if not isinstance(self.name, str):
            raise SchemaError("rule: name must be a string")
        if not isinstance(self.conditions, tuple):
            object.__setattr__(self, "conditions", tuple(self.conditions))
        if not isinstance(self.actions, tuple):
            object.__setattr__(self, "actions", tuple(self.actions))
        if not self.conditions:
            raise SchemaError("rule: conditions must be non-empty")
        if not self.actions:
            raise SchemaError("rule: actions must be non-empty")
        if not isinstance(self.combinator, Combinator):
            raise SchemaError(f"rule: unknown combinator {self.combinator!r}")

    def condition_devices(self) -> tuple[str, ...]:
        """Devices referenced by conditions, first occurrence order, deduplicated."""
        seen: dict[str, None] = {}
        for cond in self.conditions:
            seen.setdefault(cond.device, None)
        return tuple(seen)

    def referenced_devices(self) -> frozenset[str]:
        return frozenset(c.device for c in self.conditions) | frozenset(
            a.device for a in self.actions
        )


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _load_json(text: bytes | str) -> Any:
    if isinstance(text, (bytes, bytearray, memoryview)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MessageSyntaxError(f"payload is not valid UTF-8: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MessageSyntaxError(f"payload is not valid JSON: {exc}") from exc


def _require(obj: dict, key: str, context: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{context}: missing field {key!r}")
    return obj[key]


def _scalar_field(obj: dict, key: str, context: str) -> Scalar:
    value = _require(obj, key, context)
    if not is_scalar(value):
        raise SchemaError(f"{context}: field {key!r} must be a scalar")
    return value


def _condition_from_obj(obj: Any, context: str) -> Condition:
    if not isinstance(obj, dict):
        raise SchemaError(f"{context}: condition must be an object")
    op_name = _require(obj, "operator", context)
    try:
        operator = Operator(op_name)
    except ValueError:
        raise SchemaError(f"{context}: unknown operator {op_name!r}") from None
    return Condition(
        device=_require(obj, "device", context),
        attribute=_require(obj, "attribute", context),
        operator=operator,
        value=_scalar_field(obj, "value", context),
    )


def _action_from_obj(obj: Any, context: str) -> ActionCommand:
    if not isinstance(obj, dict):
        raise SchemaError(f"{context}: action must be an object")
    arguments = obj.get("arguments", [])
    if not isinstance(arguments, list):
        raise SchemaError(f"{context}: arguments must be a list")
    return ActionCommand(
        device=_require(obj, "device", context),
        capability=_require(obj, "capability", context),
        command=_require(obj, "command", context),
        arguments=tuple(arguments),
    )


def rule_from_obj(obj: Any) -> Rule:
    if not isinstance(obj, dict):
        raise SchemaError("rule: payload must be a JSON object")
    rule_id = _require(obj, "id", "rule")
    context = f"rule {rule_id!r}" if isinstance(rule_id, str) else "rule"
    conditions = _require(obj, "if", context)
    actions = _require(obj, "then", context)
    if not isinstance(conditions, list) or not conditions:
        raise SchemaError(f"{context}: 'if' must be a non-empty list")
    if not isinstance(actions, list) or not actions:
        raise SchemaError(f"{context}: 'then' must be a non-empty list")
    combinator_name = obj.get("combinator", Combinator.ALL.value)
    try:
        combinator = Combinator(combinator_name)
    except ValueError:
        raise SchemaError(f"{context}: unknown combinator {combinator_name!r}") from None
    return Rule(
        id=rule_id,
        name=_require(obj, "name", context),
        conditions=tuple(_condition_from_obj(c, context) for c in conditions),
        actions=tuple(_action_from_obj(a, context) for a in actions),
        combinator=combinator,
    )


def parse_rule(text: bytes | str) -> Rule:
    """Parse one rule from UTF-8 JSON bytes.

    Raises MessageSyntaxError for malformed JSON and SchemaError for
    missing or ill-typed fields.
    """
    return rule_from_obj(_load_json(text))


def parse_ruleset(text: bytes | str) -> list[Rule]:
    """Parse a JSON array of rules; rule ids must be unique within the set."""
    obj = _load_json(text)
    if not isinstance(obj, list):
        raise SchemaError("ruleset: payload must be a JSON array of rules")
    rules = [rule_from_obj(item) for item in obj]
    seen: set[str] = set()
    for rule in rules:
        if rule.id in seen:
            raise SchemaError(f"ruleset: duplicate rule id {rule.id!r}")
        seen.add(rule.id)
    return rules


def event_from_obj(obj: Any) -> DeviceEvent:
    if not isinstance(obj, dict):
        raise SchemaError("event: payload must be a JSON object")
    timestamp = _require(obj, "timestamp", "event")
    return DeviceEvent(
        device=_require(obj, "device", "event"),
        capability=_require(obj, "capability", "event"),
        attribute=_require(obj, "attribute", "event"),
        value=_scalar_field(obj, "value", "event"),
        timestamp=timestamp,
    )


def parse_event(text: bytes | str) -> DeviceEvent:
    """Parse one device event from UTF-8 JSON bytes."""
    return event_from_obj(_load_json(text))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def condition_to_obj(cond: Condition) -> dict:
    return {
        "device": cond.device,
        "attribute": cond.attribute,
        "operator": cond.operator.value,
        "value": cond.value,
    }


def action_to_obj(action: ActionCommand) -> dict:
    return {
        "device": action.device,
        "capability": action.capability,
        "command": action.command,
        "arguments": list(action.arguments),
    }


def rule_to_obj(rule: Rule) -> dict:
    return {
        "id": rule.id,
        "name": rule.name,
        "if": [condition_to_obj(c) for c in rule.conditions],
        "combinator": rule.combinator.value,
        "then": [action_to_obj(a) for a in rule.actions],
    }


def event_to_obj(event: DeviceEvent) -> dict:
    return {
        "device": event.device,
        "capability": event.capability,
        "attribute": event.attribute,
        "value": event.value,
        "timestamp": event.timestamp,
    }


def _dumps(obj: Any) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def rule_to_bytes(rule: Rule) -> bytes:
    return _dumps(rule_to_obj(rule))


def ruleset_to_bytes(rules: list[Rule]) -> bytes:
    return _dumps([rule_to_obj(r) for r in rules])


def event_to_bytes(event: DeviceEvent) -> bytes:
    return _dumps(event_to_obj(event))


def action_to_bytes(action: ActionCommand) -> bytes:
    return _dumps(action_to_obj(action))


def action_from_bytes(text: bytes | str) -> ActionCommand:
    obj = _load_json(text)
    return _action_from_obj(obj, "action")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def compare_scalars(operator: Operator, left: Scalar, right: Scalar) -> bool:
    """Apply operator to (left, right); total, never raises.

    Numeric comparison on a non-numeric operand is False, as is equality
    across scalar kinds.
    """
    if operator is Operator.EQUALS:
        return scalars_equal(left, right)
    if not is_number(left) or not is_number(right):
        return False
    if operator is Operator.GREATER_THAN:
        return left > right
    if operator is Operator.LESS_THAN:
        return left < right
    if operator is Operator.GREATER_THAN_OR_EQUALS:
        return left >= right
    return left <= right


def match_condition(cond: Condition, event: DeviceEvent) -> bool:
    """True iff the event is for the condition's device/attribute and satisfies it."""
    if cond.device != event.device or cond.attribute != event.attribute:
        return False
    return compare_scalars(cond.operator, event.value, cond.value)


def evaluate_rule(rule: Rule, event: DeviceEvent) -> list[ActionCommand]:
    """Return the rule's actions, in declaration order, iff its trigger holds.

    The combinator folds match_condition over all conditions against this
    single event; conditions on other devices or attributes read as False.
    """
    if rule.combinator is Combinator.ALL:
        fired = all(match_condition(c, event) for c in rule.conditions)
    else:
        fired = any(match_condition(c, event) for c in rule.conditions)
    return list(rule.actions) if fired else []
