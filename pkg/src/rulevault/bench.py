"""Timing harness: per-event handling latency across protection modes.

The measured region is the boundary call alone — from event ingress at the
boundary to the last command leaving it — with transport and message
preparation kept outside the clock. Absolute numbers are hardware-bound;
the stable result is the ordering plain < trusted_no_enc < full and the
growth of latency with ruleset size.
"""

from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass

import numpy as np

from .cache import LRU, RuleCache
from .enclave import Mode, TrustedBoundary, chunk_ruleset, encode_event_for_mode
from .envelope import NonceSequence, SymmetricKey, encrypt
from .errors import InvalidConfig
from .model import (
    ActionCommand,
    Combinator,
    Condition,
    DeviceEvent,
    Operator,
    Rule,
    ruleset_to_bytes,
)

DEFAULT_SIZES = (100, 400, 1000, 5000, 10000)
EVENT_ATTRIBUTE = "reading"
EVENT_CAPABILITY = "benchSensor"
EVENT_VALUE_MAX = 100


def device_name(index: int) -> str:
    return f"dev-{index:03d}"


@dataclass
class BenchConfig:
    mode: Mode = Mode.FULL
    ruleset_size: int = 100
    devices: int = 32
    events: int = 10000
    cache_capacity: int = 100
    cache_policy: str = LRU
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.devices < 1:
            raise InvalidConfig("devices must be >= 1")
        if self.ruleset_size < self.devices:
            raise InvalidConfig("ruleset_size must be >= devices")
        if self.events < 1:
            raise InvalidConfig("events must be >= 1")
        if self.cache_capacity < 1:
            raise InvalidConfig("cache_capacity must be >= 1")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")


@dataclass
class BenchResult:
    mode: Mode
    ruleset_size: int
    devices: int
    events: int
    latencies_us: np.ndarray
    total_wall_s: float
    cache_hits: int
    cache_misses: int
    fired_commands: int
    decrypt_calls: int = 0
    encrypt_calls: int = 0
    unseal_calls: int = 0

    @property
    def mean_us(self) -> float:
        return float(np.mean(self.latencies_us))

    @property
    def p50_us(self) -> float:
        return float(np.percentile(self.latencies_us, 50))

    @property
    def p95_us(self) -> float:
        return float(np.percentile(self.latencies_us, 95))

    @property
    def p99_us(self) -> float:
        return float(np.percentile(self.latencies_us, 99))

    @property
    def hit_rate(self) -> float:
        total = self.cache_hits + self.cache_misses
        return self.cache_hits / total if total else 0.0


# ---------------------------------------------------------------------------
# Workload generation (seeded, reproducible)
# ---------------------------------------------------------------------------

_SAT_THRESHOLD = (5, 95)
_COMMANDS = (
    ("thermostatMode", "setMode", ("cool", "heat", "off")),
    ("switch", "on", None),
    ("switch", "off", None),
    ("switchLevel", "setLevel", "level"),
)


def _make_condition(rng: random.Random, device: str, satisfiable: bool) -> Condition:
    operator = rng.choice(list(Operator))
    value: object
    if operator is Operator.EQUALS:
        value = rng.randint(0, EVENT_VALUE_MAX) if satisfiable else f"never-{rng.randint(0, 999)}"
    elif operator in (Operator.GREATER_THAN, Operator.GREATER_THAN_OR_EQUALS):
        value = rng.randint(*_SAT_THRESHOLD) if satisfiable else rng.randint(200, 300)
    else:
        value = rng.randint(*_SAT_THRESHOLD) if satisfiable else rng.randint(-300, -200)
    return Condition(device=device, attribute=EVENT_ATTRIBUTE, operator=operator, value=value)


def _make_action(rng: random.Random, device_ids: list[str]) -> ActionCommand:
    capability, command, args_spec = rng.choice(_COMMANDS)
    if args_spec is None:
        arguments: tuple = ()
    elif args_spec == "level":
        arguments = (rng.randint(0, 100),)
    else:
        arguments = (rng.choice(args_spec),)
    return ActionCommand(
        device=rng.choice(device_ids),
        capability=capability,
        command=command,
        arguments=arguments,
    )


def generate_ruleset(size: int, devices: int, seed: int) -> list[Rule]:
    """Deterministic ruleset: every device conditions at least one rule,
    operators are mixed, and about half the rules are satisfiable by the
    event generator's value range."""
    if devices < 1:
        raise InvalidConfig("devices must be >= 1")
    if size < devices:
        raise InvalidConfig("ruleset size must be >= device count")
    rng = random.Random(seed)
    device_ids = [device_name(i) for i in range(devices)]
    rules = []
    for i in range(size):
        device = device_ids[i] if i < devices else rng.choice(device_ids)
        satisfiable = rng.random() < 0.5
        if rng.random() < 0.3:
            # range rule: two conditions on the same attribute
            low = rng.randint(5, 45)
            high = rng.randint(55, 95)
            conditions = (
                Condition(device, EVENT_ATTRIBUTE, Operator.GREATER_THAN_OR_EQUALS, low),
                Condition(device, EVENT_ATTRIBUTE, Operator.LESS_THAN_OR_EQUALS, high),
            )
            combinator = Combinator.ALL if rng.random() < 0.75 else Combinator.ANY
        else:
            conditions = (_make_condition(rng, device, satisfiable),)
            combinator = Combinator.ALL
        actions = tuple(_make_action(rng, device_ids) for _ in range(rng.randint(1, 2)))
        rules.append(
            Rule(
                id=f"rule-{i:05d}",
                name=f"generated rule {i}",
                conditions=conditions,
                actions=actions,
                combinator=combinator,
            )
        )
    return rules


def generate_events(count: int, devices: int, seed: int, start_us: int = 1_700_000_000_000_000) -> list[DeviceEvent]:
    """Round-robin event stream with uniform integer readings."""
    rng = random.Random(seed)
    device_ids = [device_name(i) for i in range(devices)]
    return [
        DeviceEvent(
            device=device_ids[i % devices],
            capability=EVENT_CAPABILITY,
            attribute=EVENT_ATTRIBUTE,
            value=rng.randint(0, EVENT_VALUE_MAX),
            timestamp=start_us + i,
        )
        for i in range(count)
    ]


def derive_keys(devices: int, seed: int) -> tuple[dict[str, SymmetricKey], SymmetricKey, SymmetricKey]:
    """Deterministic (device keys, k_sgx, provisioning key) for a bench run."""
    # string seeds hash stably across processes; tuples would not
    rng = random.Random(f"rulevault-bench-keys-{seed}")
    device_keys = {
        device_name(i): SymmetricKey(rng.randbytes(32), key_id=device_name(i))
        for i in range(devices)
    }
    k_sgx = SymmetricKey(rng.randbytes(32), key_id="k-sgx")
    provisioning_key = SymmetricKey(rng.randbytes(32), key_id="prov")
    return device_keys, k_sgx, provisioning_key


def build_boundary(cfg: BenchConfig) -> tuple[TrustedBoundary, dict[str, SymmetricKey]]:
    """Provisioned boundary plus the device session keys, ready for events."""
    device_keys, k_sgx, provisioning_key = derive_keys(cfg.devices, cfg.seed)
    boundary = TrustedBoundary(
        mode=cfg.mode,
        device_keys=device_keys,
        k_sgx=k_sgx,
        provisioning_key=provisioning_key,
        cache_capacity=cfg.cache_capacity,
        cache_policy=cfg.cache_policy,
    )
    rules = generate_ruleset(cfg.ruleset_size, cfg.devices, cfg.seed)
    for chunk in chunk_ruleset(rules):
        payload = ruleset_to_bytes(chunk)
        if cfg.mode is Mode.FULL:
            boundary.provision_ruleset(
                encrypt(provisioning_key, payload, aad=b"prov/rules", sender="operator")
            )
        else:
            boundary.provision_ruleset(payload)
    return boundary, device_keys


def prepare_messages(
    events: list[DeviceEvent], mode: Mode, device_keys: dict[str, SymmetricKey]
) -> list[tuple[object, str]]:
    sequences = {device: NonceSequence(device) for device in device_keys}
    prepared = []
    for event in events:
        seq = sequences.get(event.device)
        prepared.append(encode_event_for_mode(event, mode, device_keys, nonce_seq=seq))
    return prepared


def run_bench(cfg: BenchConfig) -> BenchResult:
    """Provision, stream events through the boundary, time every call."""
    cfg.validate()
    boundary, device_keys = build_boundary(cfg)
    events = generate_events(cfg.events, cfg.devices, cfg.seed + 1)
    prepared = prepare_messages(events, cfg.mode, device_keys)
    boundary.cache.reset_counters()
    boundary.decrypt_calls = boundary.encrypt_calls = boundary.unseal_calls = 0
    latencies = np.empty(cfg.events, dtype=np.float64)
    fired = 0
    if cfg.workers <= 1:
        wall_start = time.perf_counter()
        for i, (message, topic) in enumerate(prepared):
            t0 = time.perf_counter_ns()
            out = boundary.handle_event(message, topic)
            latencies[i] = (time.perf_counter_ns() - t0) / 1000.0
            fired += len(out)
        total_wall = time.perf_counter() - wall_start
    else:
        fired, total_wall = _run_parallel(boundary, prepared, events, latencies, cfg.workers)
    return BenchResult(
        mode=cfg.mode,
        ruleset_size=cfg.ruleset_size,
        devices=cfg.devices,
        events=cfg.events,
        latencies_us=latencies,
        total_wall_s=total_wall,
        cache_hits=boundary.cache.hits,
        cache_misses=boundary.cache.misses,
        fired_commands=fired,
        decrypt_calls=boundary.decrypt_calls,
        encrypt_calls=boundary.encrypt_calls,
        unseal_calls=boundary.unseal_calls,
    )


def _run_parallel(boundary, prepared, events, latencies, workers: int) -> tuple[int, float]:
    """Per-device partitioning: one worker owns each device's whole stream,
    so per-device arrival order is preserved."""
    import threading

    partitions: dict[int, list[int]] = {w: [] for w in range(workers)}
    for i, event in enumerate(events):
        partitions[hash(event.device) % workers].append(i)
    fired_counts = [0] * workers

    def work(worker_id: int) -> None:
        for i in partitions[worker_id]:
            message, topic = prepared[i]
            t0 = time.perf_counter_ns()
            out = boundary.handle_event(message, topic)
            latencies[i] = (time.perf_counter_ns() - t0) / 1000.0
            fired_counts[worker_id] += len(out)

    threads = [threading.Thread(target=work, args=(w,)) for w in range(workers)]
    wall_start = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return sum(fired_counts), time.perf_counter() - wall_start


def run_sweep(
    modes: list[Mode],
    sizes: list[int],
    devices: int = 32,
    events: int = 10000,
    cache_capacity: int = 100,
    seed: int = 0,
) -> list[BenchResult]:
    results = []
    for size in sizes:
        for mode in modes:
            cfg = BenchConfig(
                mode=mode,
                ruleset_size=size,
                devices=devices,
                events=events,
                cache_capacity=cache_capacity,
                seed=seed,
            )
            results.append(run_bench(cfg))
    return results


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

CSV_HEADER = ["mode", "ruleset", "events", "mean_us", "p50_us", "p95_us", "p99_us", "hit_rate"]


def emit_report(results: list[BenchResult]) -> tuple[str, str]:
    """Returns (csv text, human-readable comparison table)."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(CSV_HEADER)
    for r in results:
        writer.writerow(
            [
                r.mode.value,
                r.ruleset_size,
                r.events,
                f"{r.mean_us:.3f}",
                f"{r.p50_us:.3f}",
                f"{r.p95_us:.3f}",
                f"{r.p99_us:.3f}",
                f"{r.hit_rate:.4f}",
            ]
        )
    csv_text = out.getvalue()

    modes = []
    for r in results:
        if r.mode not in modes:
            modes.append(r.mode)
    sizes = sorted({r.ruleset_size for r in results})
    by_key = {(r.mode, r.ruleset_size): r for r in results}
    lines = ["mean event handling time (us) by ruleset size"]
    header = ["ruleset".rjust(8)] + [m.value.rjust(16) for m in modes]
    lines.append("".join(header))
    for size in sizes:
        row = [str(size).rjust(8)]
        for mode in modes:
            result = by_key.get((mode, size))
            row.append((f"{result.mean_us:.2f}" if result else "-").rjust(16))
        lines.append("".join(row))
    return csv_text, "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Cache access-pattern experiment
# ---------------------------------------------------------------------------


def measure_cache_hit_rate(capacity: int, policy: str, accesses: list[str]) -> float:
    """Replay a device access sequence against a fresh cache."""
    cache = RuleCache(capacity=capacity, policy=policy)
    for device in accesses:
        if cache.get(device) is None:
            cache.put(device, [])
    return cache.hit_rate


def zipf_accesses(devices: int, count: int, seed: int, exponent: float = 1.2) -> list[str]:
    rng = random.Random(seed)
    names = [device_name(i) for i in range(devices)]
    weights = [1.0 / (rank + 1) ** exponent for rank in range(devices)]
    return rng.choices(names, weights=weights, k=count)


def uniform_accesses(devices: int, count: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    names = [device_name(i) for i in range(devices)]
    return [rng.choice(names) for _ in range(count)]
