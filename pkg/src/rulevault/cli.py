"""Operator command line.

Subcommands: run (broker | enclave | hub | fleet), rules (validate |
provision), bench, trace. Exit codes are a stable contract: 0 success,
1 runtime error, 2 usage error. The RULEVAULT_BROKER environment variable
overrides any configured broker address.
"""

from __future__ import annotations

import argparse
import os
import signal
import sys
import threading
import time

from . import __version__
from .attestation import AttestationServer, Measurement, SessionKeySet, default_build_info
from .bench import DEFAULT_SIZES, BenchConfig, run_bench, emit_report
from .broker import Broker, BrokerClient
from .config import (
    broker_address,
    device_keys_from_section,
    get_section,
    load_config,
    parse_hex_key,
    parse_mode,
    profile_from_section,
)
from .devices import DeviceKind, emission_log_to_csv, run_fleet
from .enclave import Mode
from .errors import ConfigError, RuleVaultError
from .hub import Hub
from .model import parse_ruleset
from .runtime import EnclaveRunner, HubRunner, provision_rules
from .trace import (
    distinguishability_report,
    near_pair_boundary,
    near_pair_event_sets,
    record_trace,
)

DEFAULT_BROKER_PORT = 7183


def _wait_forever() -> None:
    stop = threading.Event()

    def handler(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, handler)
    try:
        while not stop.is_set():
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    if args.component == "broker":
        return _run_broker(args)
    if args.component == "enclave":
        return _run_enclave(args)
    if args.component == "hub":
        return _run_hub(args)
    return _run_fleet(args)


def _run_broker(args) -> int:
    broker = Broker(host=args.host, port=args.port).start()
    print(f"broker listening on {broker.host}:{broker.port}", flush=True)
    try:
        _wait_forever()
    finally:
        broker.stop()
    return 0


def _run_enclave(args) -> int:
    cfg = load_config(args.config)
    section = get_section(cfg, "enclave")
    host, port = broker_address(cfg)
    mode = parse_mode(section.get("mode", "full"))
    signing_key = None
    if mode is Mode.FULL:
        platform = get_section(cfg, "platform")
        seed_hex = platform.get("signing_key_hex")
        if not seed_hex:
            raise ConfigError("[platform] signing_key_hex is required in full mode")
        signing_key = bytes.fromhex(seed_hex)
    runner = EnclaveRunner(
        host,
        port,
        mode=mode,
        enclave_id=section.get("id", "enclave-0"),
        platform_signing_key=signing_key,
        cache_capacity=int(section.get("cache_capacity", 100)),
        cache_policy=section.get("cache_policy", "lru"),
        store_path=section.get("store_path"),
        attest_retries=int(section.get("attest_retries", 5)),
        attest_timeout=float(section.get("attest_timeout", 2.0)),
    ).start()
    print(f"enclave {runner.enclave_id} running in {mode.value} mode", flush=True)
    try:
        _wait_forever()
    finally:
        runner.stop()
    return 0


def _run_hub(args) -> int:
    cfg = load_config(args.config)
    section = get_section(cfg, "hub")
    host, port = broker_address(cfg)
    mode = parse_mode(section.get("mode", "full"))
    keys_section = get_section(cfg, "keys")
    device_keys = device_keys_from_section(get_section(keys_section, "devices"))
    hub = Hub(device_keys, mode=mode, hub_id=section.get("id", "hub-0"))
    for device, kind_name in get_section(cfg, "actuators").items():
        hub.register_actuator(device, DeviceKind(kind_name))
    attestation = None
    if mode is Mode.FULL:
        platform = get_section(cfg, "platform")
        vk_hex = platform.get("verify_key_hex")
        prov_hex = keys_section.get("provisioning")
        if not vk_hex or not prov_hex:
            raise ConfigError("full mode hub needs [platform] verify_key_hex and [keys] provisioning")
        build_info = platform.get("expected_build_info")
        measurement = Measurement.of(
            build_info.encode("utf-8") if build_info else default_build_info()
        )
        attestation = AttestationServer(
            bytes.fromhex(vk_hex),
            measurement,
            SessionKeySet(
                device_keys=device_keys,
                provisioning_key=parse_hex_key(prov_hex, "prov"),
            ),
        )
    runner = HubRunner(
        host, port, hub, attestation=attestation, enclave_id=section.get("enclave_id", "enclave-0")
    ).start()
    print(f"hub {hub.hub_id} relaying {len(hub.actuators)} actuators", flush=True)
    try:
        _wait_forever()
    finally:
        runner.stop()
    return 0


def _run_fleet(args) -> int:
    cfg = load_config(args.config)
    section = get_section(cfg, "fleet")
    host, port = broker_address(cfg)
    mode = parse_mode(section.get("mode", "full"))
    device_keys = device_keys_from_section(get_section(get_section(cfg, "keys"), "devices"))
    base_dir = os.path.dirname(os.path.abspath(args.config))
    profiles = [
        profile_from_section(device, dev_section, base_dir)
        for device, dev_section in get_section(cfg, "devices").items()
    ]
    hub = Hub(device_keys, mode=mode, hub_id="fleet-hub")
    client = BrokerClient(host, port)
    events = args.events if args.events is not None else int(section.get("events", 0))

    def send(event):
        topic, payload = hub.wrap_upstream(event)
        client.publish(topic, payload)

    try:
        log = run_fleet(profiles, events, send, seed=int(section.get("seed", 0)), pace=args.pace)
    finally:
        client.close()
    csv_text = emission_log_to_csv(log)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    print(f"emitted {len(log)} events from {len(profiles)} profiles", flush=True)
    return 0


# ---------------------------------------------------------------------------
# rules
# ---------------------------------------------------------------------------


def cmd_rules(args: argparse.Namespace) -> int:
    with open(args.file, "rb") as fh:
        payload = fh.read()
    if args.action == "validate":
        rules = parse_ruleset(payload)
        devices = {d for rule in rules for d in rule.referenced_devices()}
        print(f"OK: {len(rules)} rules over {len(devices)} devices")
        return 0
    # provision
    mode = parse_mode(args.mode)
    parse_ruleset(payload)  # fail fast with diagnostics before touching the broker
    host, port = _parse_broker_flag(args.broker)
    key = parse_hex_key(args.key, "prov") if args.key else None
    devices, rules = provision_rules(
        host, port, payload, mode=mode, provisioning_key=key, timeout=args.timeout
    )
    print(f"provisioned {devices} devices / {rules} rules")
    return 0


def _parse_broker_flag(value: str | None) -> tuple[str, int]:
    # precedence: explicit flag, then RULEVAULT_BROKER, then the default port
    if value:
        return broker_address({}, override=value)
    if os.environ.get("RULEVAULT_BROKER"):
        return broker_address({})
    return ("127.0.0.1", DEFAULT_BROKER_PORT)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args: argparse.Namespace) -> int:
    if args.mode == "all":
        modes = [Mode.PLAIN, Mode.TRUSTED_NO_ENC, Mode.FULL]
    else:
        modes = [parse_mode(args.mode)]
    try:
        sizes = [int(s) for s in args.rules.split(",") if s]
    except ValueError:
        raise ConfigError(f"bad --rules list {args.rules!r}") from None
    results = []
    for size in sizes:
        for mode in modes:
            cfg = BenchConfig(
                mode=mode,
                ruleset_size=size,
                devices=args.devices,
                events=args.events,
                cache_capacity=args.cache,
                seed=args.seed,
                workers=args.workers,
            )
            result = run_bench(cfg)
            results.append(result)
            print(
                f"{mode.value:>15} rules={size:<6} mean={result.mean_us:9.2f}us "
                f"p95={result.p95_us:9.2f}us hit_rate={result.hit_rate:.3f}",
                flush=True,
            )
    csv_text, table = emit_report(results)
    print()
    print(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------


def cmd_trace(args: argparse.Namespace) -> int:
    if args.fixture != "nearpair":
        raise ConfigError(f"unknown fixture {args.fixture!r}; available: nearpair")
    sets = near_pair_event_sets(args.seed, devices=args.devices, events_per_set=args.events)
    boundary = near_pair_boundary(args.seed, devices=args.devices, rules=args.rules)
    report = distinguishability_report(sets, boundary, threshold=args.threshold)
    print(report.to_csv())
    for a, b, score in report.flagged_pairs:
        print(f"indistinguishable pair: {a} vs {b} (KL {score:.4f} < {args.threshold})")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(f"wrote {args.out}")
    if args.dump_dir:
        os.makedirs(args.dump_dir, exist_ok=True)
        for name, events in sets.items():
            boundary.reset_runtime_state()
            trace = record_trace(boundary, events)
            path = os.path.join(args.dump_dir, f"{name}.trace")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(trace.to_lines())
            print(f"wrote {path} ({len(trace)} symbols)")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulevault",
        description="End-to-end encrypted trigger-action automation engine",
    )
    parser.add_argument("--version", action="version", version=f"rulevault {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a long-lived component")
    run_sub = p_run.add_subparsers(dest="component", required=True)
    p_broker = run_sub.add_parser("broker", help="start the message broker")
    p_broker.add_argument("--host", default="127.0.0.1")
    p_broker.add_argument("--port", type=int, default=DEFAULT_BROKER_PORT)
    for name, help_text in (
        ("enclave", "start the rule engine"),
        ("hub", "start the hub/gateway relay and key service"),
    ):
        p_comp = run_sub.add_parser(name, help=help_text)
        p_comp.add_argument("--config", required=True)
        p_comp.set_defaults(func=cmd_run)
    p_fleet = run_sub.add_parser("fleet", help="emit simulated device events")
    p_fleet.add_argument("--config", required=True)
    p_fleet.add_argument("--events", type=int, default=None)
    p_fleet.add_argument("--out", default=None, help="emission log CSV path")
    p_fleet.add_argument("--pace", action="store_true", help="honor emit periods")
    p_broker.set_defaults(func=cmd_run)
    p_fleet.set_defaults(func=cmd_run)

    p_rules = sub.add_parser("rules", help="validate or provision a rules file")
    rules_sub = p_rules.add_subparsers(dest="action", required=True)
    p_validate = rules_sub.add_parser("validate", help="parse and report, offline")
    p_validate.add_argument("file")
    p_validate.set_defaults(func=cmd_rules)
    p_provision = rules_sub.add_parser("provision", help="encrypt and install via the broker")
    p_provision.add_argument("file")
    p_provision.add_argument("--broker", default=None, help="host:port")
    p_provision.add_argument("--key", default=None, help="provisioning key (64 hex chars)")
    p_provision.add_argument("--mode", default="full")
    p_provision.add_argument("--timeout", type=float, default=10.0)
    p_provision.set_defaults(func=cmd_rules)

    p_bench = sub.add_parser("bench", help="per-event latency benchmark")
    p_bench.add_argument("--mode", default="all", help="plain|trusted_no_enc|full|all")
    p_bench.add_argument("--rules", default=",".join(str(s) for s in DEFAULT_SIZES))
    p_bench.add_argument("--devices", type=int, default=32)
    p_bench.add_argument("--events", type=int, default=10000)
    p_bench.add_argument("--cache", type=int, default=100)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--out", default=None, help="CSV report path")
    p_bench.set_defaults(func=cmd_bench)

    p_trace = sub.add_parser("trace", help="access-trace distinguishability analysis")
    p_trace.add_argument("--fixture", default="nearpair")
    p_trace.add_argument("--seed", type=int, default=0)
    p_trace.add_argument("--rules", type=int, default=10)
    p_trace.add_argument("--devices", type=int, default=4)
    p_trace.add_argument("--events", type=int, default=10)
    p_trace.add_argument("--threshold", type=float, default=0.05)
    p_trace.add_argument("--out", default=None, help="score matrix CSV path")
    p_trace.add_argument("--dump-dir", default=None, help="write per-set trace dumps here")
    p_trace.set_defaults(func=cmd_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RuleVaultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
