"""Broker: delivery semantics, wildcards, backpressure, frames, hub relay."""

import os
import time

import pytest

from rulevault.broker import (
    Broker,
    BrokerClient,
    decode_frame_body,
    encode_frame,
    pattern_valid,
    topic_matches,
    topic_valid,
)
from rulevault.devices import DeviceKind
from rulevault.enclave import Mode
from rulevault.envelope import SymmetricKey, encrypt, envelope_to_json_bytes
from rulevault.errors import (
    Backpressure,
    BindError,
    BrokerUnreachable,
    PatternInvalid,
    PayloadTooLarge,
    TopicInvalid,
)
from rulevault.hub import Hub
from rulevault.model import ActionCommand, DeviceEvent, action_to_bytes


@pytest.fixture()
def broker():
    b = Broker(port=0).start()
    yield b
    b.stop()


def _client(broker) -> BrokerClient:
    return BrokerClient(broker.host, broker.port)


class TestTopics:
    def test_valid_topics(self):
        for topic in ("evt/d1", "cmd/bulb-2", "prov/rules", "attest/enclave-0"):
            assert topic_valid(topic)

    def test_invalid_topics(self):
        for topic in ("evt/", "evt/a/b", "noise", "cmd/+", "prov/other", "evt/#"):
            assert not topic_valid(topic)

    def test_patterns(self):
        assert pattern_valid("evt/+")
        assert pattern_valid("cmd/+")
        assert pattern_valid("cmd/exact")
        assert not pattern_valid("evt/#/x")
        assert not pattern_valid("+/x")
        assert not pattern_valid("attest/+")

    def test_matching(self):
        assert topic_matches("evt/+", "evt/d1")
        assert not topic_matches("evt/+", "cmd/d1")
        assert topic_matches("cmd/d1", "cmd/d1")
        assert not topic_matches("cmd/d1", "cmd/d2")

    def test_frame_round_trip(self):
        frame = encode_frame("evt/d1", 7, b"\x00\x01payload")
        assert decode_frame_body(frame[4:]) == ("evt/d1", 7, b"\x00\x01payload")
        assert int.from_bytes(frame[:4], "big") == len(frame) - 4


class TestPubSub:
    def test_single_subscriber_receives_identical_bytes(self, broker):
        sub = _client(broker)
        sub.subscribe("evt/d1")
        pub = _client(broker)
        payload = os.urandom(64)
        pub.publish("evt/d1", payload)
        topic, received, _ = sub.receive(timeout=2)
        assert topic == "evt/d1"
        assert received == payload
        sub.close(), pub.close()

    def test_publish_without_subscribers_acks_and_drops(self, broker):
        pub = _client(broker)
        seq = pub.publish("evt/ghost", b"nobody home")
        assert seq == 1
        late = _client(broker)
        late.subscribe("evt/ghost")
        assert late.receive(timeout=0.3) is None  # no retained messages
        pub.close(), late.close()

    def test_fifo_order_1000_messages(self, broker):
        sub = _client(broker)
        sub.subscribe("evt/d1")
        pub = _client(broker)
        for i in range(1000):
            pub.publish("evt/d1", str(i).encode())
        received = [sub.receive(timeout=2)[1] for _ in range(1000)]
        assert received == [str(i).encode() for i in range(1000)]
        sub.close(), pub.close()

    def test_wildcard_receives_all_devices(self, broker):
        sub = _client(broker)
        sub.subscribe("evt/+")
        pub = _client(broker)
        for device in ("d1", "d2", "d3"):
            pub.publish(f"evt/{device}", device.encode())
        got = {sub.receive(timeout=2)[1] for _ in range(3)}
        assert got == {b"d1", b"d2", b"d3"}
        sub.close(), pub.close()

    def test_exact_subscription_excludes_others(self, broker):
        sub = _client(broker)
        sub.subscribe("cmd/mine")
        pub = _client(broker)
        pub.publish("cmd/other", b"not yours")
        pub.publish("cmd/mine", b"yours")
        topic, payload, _ = sub.receive(timeout=2)
        assert (topic, payload) == ("cmd/mine", b"yours")
        assert sub.receive(timeout=0.2) is None
        sub.close(), pub.close()

    def test_invalid_topic_raises(self, broker):
        pub = _client(broker)
        with pytest.raises(TopicInvalid):
            pub.publish("bogus topic", b"x")
        pub.close()

    def test_invalid_pattern_raises(self, broker):
        sub = _client(broker)
        with pytest.raises(PatternInvalid):
            sub.subscribe("evt/#/x")
        sub.close()

    def test_oversize_payload_rejected_client_side(self, broker):
        pub = _client(broker)
        with pytest.raises(PayloadTooLarge):
            pub.publish("evt/d1", b"x" * ((1 << 20) + 1))
        pub.close()

    def test_unreachable_broker(self):
        with pytest.raises(BrokerUnreachable):
            BrokerClient("127.0.0.1", 1, connect_timeout=0.5)

    def test_port_already_bound(self, broker):
        with pytest.raises(BindError):
            Broker(port=broker.port).start()

    def test_backpressure_on_stuck_subscriber(self):
        import socket

        broker = Broker(port=0, max_queue=2, deliver_timeout=0.2).start()
        stuck = None
        pub = None
        try:
            # raw subscriber that never reads: kernel buffers fill, the
            # broker-side queue backs up, publish must fail bounded
            stuck = socket.create_connection((broker.host, broker.port))
            stuck.sendall(encode_frame("$ctl/sub", 1, b"evt/d1"))
            time.sleep(0.3)
            pub = _client(broker)
            with pytest.raises(Backpressure):
                for _ in range(200):
                    pub.publish("evt/d1", b"z" * (256 * 1024), timeout=10)
        finally:
            if pub is not None:
                pub.close()
            if stuck is not None:
                stuck.close()
            broker.stop()

    def test_capture_sees_published_frames(self, broker):
        capture = broker.enable_capture()
        pub = _client(broker)
        pub.publish("evt/d1", b"captured")
        pub.close()
        decoded = [decode_frame_body(frame[4:]) for frame in capture]
        assert ("evt/d1", 1, b"captured") in decoded


class TestHubRelay:
    def _setup(self):
        keys = {
            "sensor-1": SymmetricKey(os.urandom(32), key_id="sensor-1"),
            "bulb-1": SymmetricKey(os.urandom(32), key_id="bulb-1"),
        }
        hub = Hub(keys, mode=Mode.FULL)
        hub.register_actuator("bulb-1", DeviceKind.BULB)
        return keys, hub

    def test_upstream_wraps_reading_no_plaintext(self):
        keys, hub = self._setup()
        event = DeviceEvent("sensor-1", "cap", "reading", "secret-value", 1)
        topic, payload = hub.wrap_upstream(event)
        assert topic == "evt/sensor-1"
        assert b"secret-value" not in payload

    def test_downstream_command_applied(self):
        keys, hub = self._setup()
        cmd = ActionCommand("bulb-1", "switch", "on")
        env = encrypt(keys["bulb-1"], action_to_bytes(cmd), aad=b"cmd/bulb-1", sender="enclave-0")
        applied = hub.handle_command("cmd/bulb-1", envelope_to_json_bytes(env))
        assert applied == cmd
        assert hub.actuator_state("bulb-1").get("switch") == "on"
        assert hub.applied_commands == 1

    def test_tampered_command_dropped_device_untouched(self):
        keys, hub = self._setup()
        cmd = ActionCommand("bulb-1", "switch", "on")
        env = encrypt(keys["bulb-1"], action_to_bytes(cmd), aad=b"cmd/bulb-1", sender="enclave-0")
        wire = bytearray(envelope_to_json_bytes(env))
        wire[len(wire) // 2] ^= 0x08
        before = hub.actuator_state("bulb-1")
        assert hub.handle_command("cmd/bulb-1", bytes(wire)) is None
        assert hub.rejected_commands == 1
        assert hub.actuator_state("bulb-1") == before

    def test_replayed_envelope_on_foreign_topic_rejected(self):
        """A command captured from cmd/a fails when replayed on cmd/b."""
        keys = {
            "bulb-a": SymmetricKey(os.urandom(32), key_id="bulb-a"),
            "bulb-b": SymmetricKey(os.urandom(32), key_id="bulb-b"),
        }
        hub = Hub(keys, mode=Mode.FULL)
        hub.register_actuator("bulb-a", DeviceKind.BULB)
        hub.register_actuator("bulb-b", DeviceKind.BULB)
        cmd = ActionCommand("bulb-a", "switch", "on")
        env = encrypt(keys["bulb-a"], action_to_bytes(cmd), aad=b"cmd/bulb-a", sender="enclave-0")
        wire = envelope_to_json_bytes(env)
        assert hub.handle_command("cmd/bulb-b", wire) is None
        assert hub.rejected_commands == 1
        assert hub.actuator_state("bulb-b").get("switch") == "off"
        # the same bytes on the right topic still work
        assert hub.handle_command("cmd/bulb-a", wire) == cmd

    def test_round_trip_latency_measurable(self, broker):
        """Device -> enclave-side consumer -> device, timed per message."""
        keys, hub = self._setup()
        sub = _client(broker)
        sub.subscribe("evt/+")
        pub = _client(broker)
        latencies = []
        for i in range(20):
            event = DeviceEvent("sensor-1", "cap", "reading", i, i + 1)
            t0 = time.perf_counter()
            topic, payload = hub.wrap_upstream(event)
            pub.publish(topic, payload)
            assert sub.receive(timeout=2) is not None
            latencies.append(time.perf_counter() - t0)
        assert len(latencies) == 20
        assert all(lat > 0 for lat in latencies)
        sub.close(), pub.close()
