"""Flat key=value configuration files (a strict TOML subset).

Supported syntax: `[section.subsection]` headers, `key = value` pairs with
double-quoted strings, integers, floats, booleans, and flat arrays.
Full-line comments start with `#`; trailing comments are allowed after
non-string values. Files written in this subset remain valid TOML.
"""

from __future__ import annotations

import json
import os
import random
import re
from dataclasses import dataclass

from .devices import (
    ACTUATOR_KINDS,
    ConstantValue,
    DeviceKind,
    DeviceProfile,
    TraceValues,
    UniformRange,
)
from .enclave import Mode
from .envelope import SymmetricKey
from .errors import ConfigError
from .model import Rule, parse_ruleset

_KEY_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.\-]*$")


def parse_config(text: str, source: str = "<config>") -> dict:
    root: dict = {}
    current = root
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: unterminated section header")
            current = root
            for part in line[1:-1].strip().split("."):
                part = part.strip()
                if not part:
                    raise ConfigError(f"{source}:{lineno}: empty section name")
                current = current.setdefault(part, {})
                if not isinstance(current, dict):
                    raise ConfigError(f"{source}:{lineno}: section collides with a value")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value_text = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
        current[key] = _parse_value(value_text.strip(), source, lineno)
    return root


def _parse_value(text: str, source: str, lineno: int):
    if not text:
        raise ConfigError(f"{source}:{lineno}: missing value")
    if text[0] == '"':
        try:
            return json.loads(text)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad string literal {text!r}") from None
    if text[0] == "[":
        try:
            return json.loads(text)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad array literal {text!r}") from None
    if "#" in text:  # trailing comment on a non-string value
        text = text.split("#", 1)[0].strip()
    if text in ("true", "false"):
        return text == "true"
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    raise ConfigError(f"{source}:{lineno}: unquoted value {text!r}")


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read(), source=path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None


def get_section(cfg: dict, name: str, source: str = "config") -> dict:
    section = cfg.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"{source}: [{name}] must be a section")
    return section


def parse_mode(value: str) -> Mode:
    try:
        return Mode(value)
    except ValueError:
        raise ConfigError(
            f"unknown mode {value!r}; expected one of {[m.value for m in Mode]}"
        ) from None


def parse_hex_key(value: str, key_id: str) -> SymmetricKey:
    try:
        secret = bytes.fromhex(value)
    except (ValueError, TypeError):
        raise ConfigError(f"key {key_id!r}: not valid hex") from None
    if len(secret) != 32:
        raise ConfigError(f"key {key_id!r}: expected 32 bytes, got {len(secret)}")
    return SymmetricKey(secret, key_id=key_id)


def device_keys_from_section(section: dict) -> dict[str, SymmetricKey]:
    return {device: parse_hex_key(hexval, device) for device, hexval in section.items()}


def broker_address(cfg: dict, override: str | None = None) -> tuple[str, int]:
    """[broker] host/port, overridable by the RULEVAULT_BROKER env variable."""
    env = override if override is not None else os.environ.get("RULEVAULT_BROKER")
    if env:
        host, _, port_text = env.rpartition(":")
        if not host or not port_text.isdigit():
            raise ConfigError(f"bad broker address {env!r}; expected host:port")
        return host, int(port_text)
    section = get_section(cfg, "broker")
    host = section.get("host", "127.0.0.1")
    port = section.get("port")
    if not isinstance(port, int):
        raise ConfigError("[broker] port must be an integer")
    return host, port


# ---------------------------------------------------------------------------
# Scenario files: device fleet + rules + run parameters
# ---------------------------------------------------------------------------


@dataclass
class ScenarioSpec:
    name: str
    mode: Mode
    seed: int
    events: int
    rules: list[Rule]
    profiles: list[DeviceProfile]
    cache_capacity: int = 100
    cache_policy: str = "lru"

    def sensor_profiles(self) -> list[DeviceProfile]:
        return [p for p in self.profiles if p.is_sensor]

    def actuator_profiles(self) -> list[DeviceProfile]:
        return [p for p in self.profiles if not p.is_sensor]

    def device_ids(self) -> list[str]:
        return [p.device for p in self.profiles]


def profile_from_section(device: str, section: dict, base_dir: str) -> DeviceProfile:
    kind_name = section.get("kind")
    try:
        kind = DeviceKind(kind_name)
    except ValueError:
        raise ConfigError(f"device {device!r}: unknown kind {kind_name!r}") from None
    emit_period = float(section.get("emit_period", 0.0))
    if kind in ACTUATOR_KINDS:
        return DeviceProfile(device=device, kind=kind, emit_period=emit_period)
    gen_name = section.get("generator")
    if gen_name == "constant":
        generator = ConstantValue(section["value"])
    elif gen_name == "uniform":
        generator = UniformRange(
            low=section.get("low", 0),
            high=section.get("high", 100),
            integer=bool(section.get("integer", True)),
        )
    elif gen_name == "trace":
        if "values" in section:
            generator = TraceValues(tuple(section["values"]))
        else:
            generator = TraceValues.from_file(os.path.join(base_dir, section["file"]))
    else:
        raise ConfigError(f"device {device!r}: unknown generator {gen_name!r}")
    return DeviceProfile(device=device, kind=kind, emit_period=emit_period, generator=generator)


def load_scenario(path: str) -> ScenarioSpec:
    cfg = load_config(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    scenario = get_section(cfg, "scenario", path)
    rules_file = scenario.get("rules_file")
    if not rules_file:
        raise ConfigError(f"{path}: [scenario] rules_file is required")
    rules_path = os.path.join(base_dir, rules_file)
    try:
        with open(rules_path, "rb") as fh:
            rules = parse_ruleset(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"{path}: rules file not found: {rules_path}") from None
    devices_section = get_section(cfg, "devices", path)
    if not devices_section:
        raise ConfigError(f"{path}: no [devices.<id>] sections")
    profiles = [
        profile_from_section(device, section, base_dir)
        for device, section in devices_section.items()
    ]
    enclave_section = get_section(cfg, "enclave", path)
    return ScenarioSpec(
        name=scenario.get("name", os.path.basename(path)),
        mode=parse_mode(scenario.get("mode", "full")),
        seed=int(scenario.get("seed", 0)),
        events=int(scenario.get("events", 0)),
        rules=rules,
        profiles=profiles,
        cache_capacity=int(enclave_section.get("cache_capacity", 100)),
        cache_policy=enclave_section.get("cache_policy", "lru"),
    )


def scenario_keys(
    spec: ScenarioSpec,
) -> tuple[dict[str, SymmetricKey], SymmetricKey, bytes]:
    """Deterministic key material for a scenario run.

    Returns (device session keys, provisioning key, platform signing key
    seed). Seeded from the scenario so its wire traffic is reproducible
    run to run.
    """
    rng = random.Random(f"scenario-{spec.name}-{spec.seed}")
    device_keys = {
        device: SymmetricKey(rng.randbytes(32), key_id=device) for device in spec.device_ids()
    }
    provisioning_key = SymmetricKey(rng.randbytes(32), key_id="prov")
    platform_seed = rng.randbytes(32)
    return device_keys, provisioning_key, platform_seed
