"""In-process TCP publish/subscribe broker and its client.

Wire protocol (interop contract, docs/wire-format.md): every frame is a
4-byte big-endian length followed by UTF-8 JSON

    {"topic": str, "seq": int, "payload_b64": str}

Data topics are `evt/<device>`, `cmd/<device>`, `prov/rules`, and
`attest/<enclave_id>`. Control traffic reuses the frame shape on reserved
topics:

    $ctl/sub     client -> broker   payload = subscription pattern
    $ctl/ack     broker -> client   payload = {"seq": N}    publish accepted
    $ctl/suback  broker -> client   payload = {"pattern": ...}
    $ctl/err     broker -> client   payload = {"seq": N, "error": ..., "detail": ...}

A publish is acknowledged only after the message has been queued, in
order, to every current subscriber. Delivery is at-least-once: a publisher
that retries after a lost ack may duplicate a message, so consumers are
expected to be idempotent. Per connection and topic, frames preserve FIFO
order. Slow subscribers exert bounded backpressure: when a subscriber
queue stays full past the delivery timeout the publish fails instead of
buffering without bound. The broker retains nothing; durability lives in
the engine store.
"""

from __future__ import annotations

import json
import logging
import queue
import re
import socket
import threading
from base64 import b64decode, b64encode

from .errors import (
    Backpressure,
    BindError,
    BrokerUnreachable,
    NotConnected,
    PatternInvalid,
    PayloadTooLarge,
    RuleVaultError,
    TopicInvalid,
)

logger = logging.getLogger(__name__)

MAX_PAYLOAD = 1 << 20
MAX_FRAME = MAX_PAYLOAD + (MAX_PAYLOAD // 2)

CTL_SUB = "$ctl/sub"
CTL_ACK = "$ctl/ack"
CTL_SUBACK = "$ctl/suback"
CTL_ERR = "$ctl/err"

_TOPIC_RE = re.compile(r"^(?:(?:evt|cmd)/[^/+#]{1,128}|prov/rules|attest/[^/+#]{1,128})$")
_WILDCARD_RE = re.compile(r"^(?:evt|cmd)/\+$")

_ERROR_BY_NAME: dict[str, type[RuleVaultError]] = {
    "TopicInvalid": TopicInvalid,
    "PatternInvalid": PatternInvalid,
    "Backpressure": Backpressure,
    "PayloadTooLarge": PayloadTooLarge,
}


def topic_valid(topic: str) -> bool:
    return isinstance(topic, str) and bool(_TOPIC_RE.match(topic))


def pattern_valid(pattern: str) -> bool:
    return isinstance(pattern, str) and bool(
        _TOPIC_RE.match(pattern) or _WILDCARD_RE.match(pattern)
    )


def topic_matches(pattern: str, topic: str) -> bool:
    if pattern == topic:
        return True
    if _WILDCARD_RE.match(pattern):
        prefix = pattern[:-1]
        return topic.startswith(prefix) and "/" not in topic[len(prefix):]
    return False


def encode_frame(topic: str, seq: int, payload: bytes) -> bytes:
    body = json.dumps(
        {"topic": topic, "seq": seq, "payload_b64": b64encode(payload).decode("ascii")},
        separators=(",", ":"),
    ).encode("utf-8")
    return len(body).to_bytes(4, "big") + body


def decode_frame_body(body: bytes) -> tuple[str, int, bytes]:
    obj = json.loads(body.decode("utf-8"))
    return obj["topic"], obj["seq"], b64decode(obj["payload_b64"])


def _recv_exact(sock: socket.socket, count: int) -> bytes | None:
    chunks = []
    remaining = count
    while remaining > 0:
        try:
            chunk = sock.recv(remaining)
        except OSError:
            return None
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> tuple[str, int, bytes] | None:
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    length = int.from_bytes(header, "big")
    if length > MAX_FRAME:
        return None
    body = _recv_exact(sock, length)
    if body is None:
        return None
    try:
        return decode_frame_body(body)
    except (ValueError, KeyError, TypeError):
        return None


class _Conn:
    """One broker-side client connection with its ordered outbound queue."""

    def __init__(self, sock: socket.socket, addr, max_queue: int):
        self.sock = sock
        self.addr = addr
        self.outbound: queue.Queue[bytes | None] = queue.Queue(maxsize=max_queue)
        self.subscriptions: list[str] = []
        self.out_seq = 0
        self.alive = True
        self.lock = threading.Lock()

    def next_seq(self) -> int:
        with self.lock:
            self.out_seq += 1
            return self.out_seq

    def enqueue(self, frame: bytes, timeout: float) -> bool:
        try:
            self.outbound.put(frame, timeout=timeout)
            return True
        except queue.Full:
            return False

    def request_stop(self) -> None:
        try:
            self.outbound.put_nowait(None)
        except queue.Full:
            pass  # writer exits via the alive flag instead

    def close(self) -> None:
        if self.alive:
            self.alive = False
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()


class Broker:
    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        max_queue: int = 256,
        deliver_timeout: float = 5.0,
    ):
        self.host = host
        self._requested_port = port
        self.max_queue = max_queue
        self.deliver_timeout = deliver_timeout
        self._listener: socket.socket | None = None
        self._conns: list[_Conn] = []
        self._lock = threading.Lock()
        self._running = False
        self._threads: list[threading.Thread] = []
        self.capture: list[bytes] | None = None

    @property
    def port(self) -> int:
        if self._listener is None:
            return self._requested_port
        return self._listener.getsockname()[1]

    @property
    def address(self) -> tuple[str, int]:
        return (self.host, self.port)

    def enable_capture(self) -> list[bytes]:
        """Record every raw published frame, as an eavesdropper would see it."""
        self.capture = []
        return self.capture

    def start(self) -> "Broker":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind((self.host, self._requested_port))
        except OSError as exc:
            listener.close()
            raise BindError(f"cannot bind {self.host}:{self._requested_port}: {exc}") from exc
        listener.listen(64)
        self._listener = listener
        self._running = True
        accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        accept_thread.start()
        self._threads.append(accept_thread)
        logger.info("broker listening on %s:%d", self.host, self.port)
        return self

    def stop(self) -> None:
        self._running = False
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._conns)
            self._conns.clear()
        for conn in conns:
            conn.request_stop()
            conn.close()

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while self._running:
            try:
                sock, addr = self._listener.accept()
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Conn(sock, addr, self.max_queue)
            with self._lock:
                self._conns.append(conn)
            threading.Thread(target=self._reader_loop, args=(conn,), daemon=True).start()
            threading.Thread(target=self._writer_loop, args=(conn,), daemon=True).start()

    def _writer_loop(self, conn: _Conn) -> None:
        while conn.alive:
            try:
                frame = conn.outbound.get(timeout=0.25)
            except queue.Empty:
                continue
            if frame is None:
                break
            try:
                conn.sock.sendall(frame)
            except OSError:
                break
        self._drop(conn)

    def _reader_loop(self, conn: _Conn) -> None:
        while conn.alive:
            raw = read_frame(conn.sock)
            if raw is None:
                break
            topic, seq, payload = raw
            if topic == CTL_SUB:
                self._handle_subscribe(conn, seq, payload)
            else:
                self._handle_publish(conn, seq, topic, payload)
        conn.request_stop()
        self._drop(conn)

    def _drop(self, conn: _Conn) -> None:
        conn.close()
        with self._lock:
            if conn in self._conns:
                self._conns.remove(conn)

    def _reply(self, conn: _Conn, topic: str, payload: dict) -> None:
        frame = encode_frame(topic, conn.next_seq(), json.dumps(payload).encode("utf-8"))
        conn.enqueue(frame, self.deliver_timeout)

    def _handle_subscribe(self, conn: _Conn, seq: int, payload: bytes) -> None:
        pattern = payload.decode("utf-8", errors="replace")
        if not pattern_valid(pattern):
            self._reply(
                conn,
                CTL_ERR,
                {"seq": seq, "error": "PatternInvalid", "detail": pattern},
            )
            return
        with self._lock:
            if pattern not in conn.subscriptions:
                conn.subscriptions.append(pattern)
        self._reply(conn, CTL_SUBACK, {"seq": seq, "pattern": pattern})

    def _handle_publish(self, conn: _Conn, seq: int, topic: str, payload: bytes) -> None:
        if not topic_valid(topic):
            self._reply(conn, CTL_ERR, {"seq": seq, "error": "TopicInvalid", "detail": topic})
            return
        if len(payload) > MAX_PAYLOAD:
            self._reply(
                conn, CTL_ERR, {"seq": seq, "error": "PayloadTooLarge", "detail": topic}
            )
            return
        if self.capture is not None:
            self.capture.append(encode_frame(topic, seq, payload))
        with self._lock:
            targets = [
                c
                for c in self._conns
                if c.alive and any(topic_matches(p, topic) for p in c.subscriptions)
            ]
        for target in targets:
            frame = encode_frame(topic, target.next_seq(), payload)
            if not target.enqueue(frame, self.deliver_timeout):
                # bounded backpressure: refuse the publish, do not buffer forever
                self._reply(
                    conn,
                    CTL_ERR,
                    {"seq": seq, "error": "Backpressure", "detail": topic},
                )
                return
        self._reply(conn, CTL_ACK, {"seq": seq})


class BrokerClient:
    """Synchronous broker client: acked publishes, queued deliveries."""

    def __init__(self, host: str, port: int, connect_timeout: float = 5.0):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.settimeout(connect_timeout)
        try:
            self._sock.connect((host, port))
        except OSError as exc:
            self._sock.close()
            raise BrokerUnreachable(f"cannot reach broker at {host}:{port}: {exc}") from exc
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._request_lock = threading.Lock()
        self._control: queue.Queue[tuple[str, dict]] = queue.Queue()
        self._inbound: queue.Queue[tuple[str, bytes, int]] = queue.Queue()
        self._last_delivery_seq = 0
        self._connected = True
        self._reader = threading.Thread(target=self._reader_loop, daemon=True)
        self._reader.start()

    def _next_seq(self) -> int:
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def _reader_loop(self) -> None:
        while self._connected:
            raw = read_frame(self._sock)
            if raw is None:
                break
            topic, seq, payload = raw
            if topic in (CTL_ACK, CTL_SUBACK, CTL_ERR):
                try:
                    self._control.put((topic, json.loads(payload.decode("utf-8"))))
                except ValueError:
                    continue
            else:
                # at-least-once transport: drop anything not strictly newer
                if seq <= self._last_delivery_seq:
                    continue
                self._last_delivery_seq = seq
                self._inbound.put((topic, payload, seq))
        self._connected = False

    def _roundtrip(self, frame: bytes, want_seq: int, timeout: float) -> dict:
        if not self._connected:
            raise NotConnected("connection is closed")
        with self._request_lock:
            try:
                self._sock.sendall(frame)
            except OSError as exc:
                self._connected = False
                raise NotConnected(f"send failed: {exc}") from exc
            while True:
                try:
                    topic, obj = self._control.get(timeout=timeout)
                except queue.Empty:
                    raise NotConnected("broker did not answer in time") from None
                if obj.get("seq") != want_seq:
                    continue
                if topic == CTL_ERR:
                    error_cls = _ERROR_BY_NAME.get(obj.get("error", ""), RuleVaultError)
                    raise error_cls(obj.get("detail", obj.get("error", "broker error")))
                return obj

    def publish(self, topic: str, payload: bytes, timeout: float = 10.0) -> int:
        """Publish and wait for the ack; returns this connection's seq."""
        if len(payload) > MAX_PAYLOAD:
            raise PayloadTooLarge(f"payload exceeds {MAX_PAYLOAD} bytes")
        seq = self._next_seq()
        self._roundtrip(encode_frame(topic, seq, payload), seq, timeout)
        return seq

    def subscribe(self, pattern: str, timeout: float = 10.0) -> str:
        seq = self._next_seq()
        frame = encode_frame(CTL_SUB, seq, pattern.encode("utf-8"))
        self._roundtrip(frame, seq, timeout)
        return pattern

    def receive(self, timeout: float | None = None) -> tuple[str, bytes, int] | None:
        """Next delivered (topic, payload, seq), or None on timeout."""
        try:
            return self._inbound.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        self._connected = False
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    @property
    def connected(self) -> bool:
        return self._connected
