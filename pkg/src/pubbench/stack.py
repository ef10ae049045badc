"""The instrumented publish/subscribe stack.

Mirrors a four-layer middleware pipeline: application -> client library ->
middleware adapter -> wire, with a trace event captured at every layer
boundary on both sides.  Each node runs a single-threaded executor that
interleaves fixed-rate timer ticks and incoming transport events;
callbacks never overlap within a node, and overdue ticks are executed
(never skipped) against their original deadlines.

Two execution substrates share the same node logic:

* ``spin`` drives one node against a real (or virtual) clock; the UDP
  backend runs one spinning thread per node.
* ``SimKernel`` co-simulates many nodes on one deterministic virtual
  timeline, modelling execution costs via each node's ``SimContext``.
"""

from __future__ import annotations

import hashlib
import struct
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from heapq import heappop, heappush
from typing import Callable, Optional

from .transport import (
    HEADER_SIZE,
    NackRecord,
    PacketType,
    ReassemblyBuffer,
    FeedResult,
    WireFormatError,
    bitmap_to_indices,
    decode_header,
    encode_nack,
    encode_packet,
    fragment_payload,
    WirePacket,
)

MESSAGE_HEADER_FORMAT = "<IQ"  # seq, publish_ts_ns
MESSAGE_HEADER_SIZE = struct.calcsize(MESSAGE_HEADER_FORMAT)


@dataclass(frozen=True)
class MessageHeader:
    seq: int
    publish_ts_ns: int


def serialize_message(header: MessageHeader, payload: bytes) -> bytes:
    """Copy header + payload into one contiguous buffer.

    The copy is genuine (never elided), so the measured serialize span
    grows with payload size.
    """
    return struct.pack(MESSAGE_HEADER_FORMAT, header.seq, header.publish_ts_ns) + payload


def parse_message(data: bytes) -> tuple:
    seq, ts = struct.unpack_from(MESSAGE_HEADER_FORMAT, data)
    return MessageHeader(seq, ts), data[MESSAGE_HEADER_SIZE:]


class Stage(str, Enum):
    # publisher side
    APP_PUBLISH = "APP_PUBLISH"
    CLIENT_PUBLISH = "CLIENT_PUBLISH"
    ADAPTER_PUBLISH = "ADAPTER_PUBLISH"
    SERIALIZE_BEGIN = "SERIALIZE_BEGIN"
    SERIALIZE_END = "SERIALIZE_END"
    WIRE_SEND = "WIRE_SEND"
    # subscriber side
    WIRE_RECV_COMPLETE = "WIRE_RECV_COMPLETE"
    ADAPTER_DELIVER = "ADAPTER_DELIVER"
    CLIENT_DELIVER = "CLIENT_DELIVER"
    CALLBACK_BEGIN = "CALLBACK_BEGIN"
    CALLBACK_END = "CALLBACK_END"


STAGE_ORDER = {stage: i for i, stage in enumerate(Stage)}
PUBLISHER_STAGES = tuple(Stage)[:6]
SUBSCRIBER_STAGES = tuple(Stage)[6:]


class SampleStatus(str, Enum):
    IN_TIME = "IN_TIME"
    LATE = "LATE"
    LOST = "LOST"


class SendStatus(str, Enum):
    SENT_IN_TIME = "SENT_IN_TIME"
    SENT_LATE = "SENT_LATE"
    UNSENT = "UNSENT"


@dataclass(slots=True)
class TraceEvent:
    run_id: str
    node_id: int
    topic_id: int
    seq: int
    stage: Stage
    ts_ns: int


@dataclass(slots=True)
class SampleRecord:
    run_id: str
    topic_id: int
    publisher_node: int
    subscriber_node: int
    seq: int
    publish_ts_ns: int
    receive_ts_ns: Optional[int]
    latency_ns: Optional[int]
    status: SampleStatus


@dataclass(slots=True)
class PublisherRecord:
    run_id: str
    topic_id: int
    publisher_node: int
    seq: int
    scheduled_ns: int
    publish_ts_ns: Optional[int]
    send_status: SendStatus


# --------------------------------------------------------------------------
# Execution contexts


@dataclass(frozen=True)
class CostModel:
    """Virtual-time execution costs for the simulated backend."""

    stage_ns: int = 2000
    serialize_ns_per_byte: float = 1.0
    frag_ns: int = 1000

    def serialize_ns(self, payload_bytes: int) -> int:
        return self.stage_ns + int(self.serialize_ns_per_byte * payload_bytes)


class SimContext:
    """Virtual clock cursor for one node.

    ``charge`` models time spent inside a callback; ``sleep_ns`` models
    idle waiting.  Both simply advance the cursor.
    """

    __slots__ = ("cursor",)
    virtual = True

    def __init__(self, start_ns: int = 0):
        self.cursor = start_ns

    def begin(self, start_ns: int) -> None:
        self.cursor = start_ns

    def now_ns(self) -> int:
        return self.cursor

    stamp = now_ns

    def charge(self, ns: int) -> None:
        self.cursor += ns

    def sleep_ns(self, ns: int) -> None:
        self.cursor += ns


class MonotonicContext:
    """Real monotonic clock; execution costs are whatever the CPU takes."""

    __slots__ = ()
    virtual = False

    def begin(self, start_ns: int) -> None:
        pass

    def now_ns(self) -> int:
        return time.monotonic_ns()

    stamp = now_ns

    def charge(self, ns: int) -> None:
        pass

    def sleep_ns(self, ns: int) -> None:
        if ns > 0:
            time.sleep(ns / 1e9)


class Timer:
    """Fixed-rate timer: deadlines t0, t0+p, t0+2p, ...

    ``ticks_left`` caps the schedule length; ``cap_ns`` closes the firing
    window (a due tick encountered at or after the cap is discarded, which
    is how a backlogged publisher ends up with unsent messages).
    """

    __slots__ = ("period_ns", "next_deadline_ns", "ticks_left", "cap_ns", "callback")

    def __init__(self, first_deadline_ns: int, period_ns: int,
                 callback: Callable[[int], None], ticks: Optional[int] = None,
                 cap_ns: Optional[int] = None):
        self.period_ns = period_ns
        self.next_deadline_ns = first_deadline_ns
        self.ticks_left = ticks if ticks is not None else -1
        self.cap_ns = cap_ns
        self.callback = callback

    def fire(self) -> None:
        deadline = self.next_deadline_ns
        self.next_deadline_ns += self.period_ns
        if self.ticks_left > 0:
            self.ticks_left -= 1
        self.callback(deadline)


# --------------------------------------------------------------------------
# Node


class Node:
    """One benchmark participant: either publishers or subscriptions.

    All state is confined to the node's execution context; nodes exchange
    data only through their channel send function and inbox.
    """

    def __init__(self, node_id: int, run_id: str, ctx, cost: CostModel):
        self.node_id = node_id
        self.run_id = run_id
        self.ctx = ctx
        self.cost = cost
        self.timers: list[Timer] = []
        self.inbox: deque = deque()         # (arrival_ns, src, datagram)
        self.stop_ns: int = 0
        self.traces: list[TraceEvent] = []
        self.publishers: dict[int, "Publisher"] = {}
        self.subscriptions: dict[int, "Subscription"] = {}
        # send(dest, datagram, send_ns) -- wired to a channel by the runner
        self.send_fn: Callable = _unwired_send
        self.endpoint = None                # UDP only
        self.busy_until_ns = 0              # SimKernel bookkeeping
        self.wake_at_ns: Optional[int] = None
        self.decode_errors = 0

    # -- tracing

    def trace(self, topic_id: int, seq: int, stage: Stage, ts_ns: int) -> None:
        self.traces.append(TraceEvent(self.run_id, self.node_id, topic_id, seq, stage, ts_ns))

    # -- work selection (shared by spin and SimKernel)

    def next_work(self, now_ns: int):
        """The earliest due timer tick if any, otherwise one due transport
        event, otherwise None.  Discards timer ticks whose firing window
        has closed."""
        if now_ns >= self.stop_ns:
            return None
        best: Optional[Timer] = None
        for timer in self.timers:
            if timer.ticks_left == 0 or timer.next_deadline_ns > now_ns:
                continue
            if timer.cap_ns is not None and now_ns >= timer.cap_ns:
                timer.ticks_left = 0
                continue
            if best is None or timer.next_deadline_ns < best.next_deadline_ns:
                best = timer
        if best is not None:
            return ("timer", best)
        if self.inbox and self.inbox[0][0] <= now_ns:
            return ("event", None)
        return None

    def run_work(self, work, start_ns: int) -> int:
        """Execute one work item starting at start_ns; returns the time the
        executor becomes free again (the context cursor for virtual time)."""
        self.ctx.begin(start_ns)
        kind, timer = work
        if kind == "timer":
            timer.fire()
        else:
            _, src, datagram = self.inbox.popleft()
            self.handle_datagram(datagram, src)
        return self.ctx.now_ns() if self.ctx.virtual else start_ns

    def next_event_time(self) -> Optional[int]:
        """Earliest future instant at which work becomes due, if any."""
        best: Optional[int] = None
        for timer in self.timers:
            if timer.ticks_left == 0:
                continue
            d = timer.next_deadline_ns
            if d < self.stop_ns and (best is None or d < best):
                best = d
        if self.inbox:
            a = self.inbox[0][0]
            if a < self.stop_ns and (best is None or a < best):
                best = a
        return best

    def poll_source(self, timeout_ns: int):
        """Block up to timeout_ns for one datagram; virtual contexts just
        advance their clock."""
        if self.endpoint is not None:
            return self.endpoint.poll(timeout_ns / 1e9)
        self.ctx.sleep_ns(timeout_ns)
        return None

    # -- datagram dispatch

    def handle_datagram(self, datagram, src) -> None:
        try:
            fields = decode_header(datagram)
        except WireFormatError:
            self.decode_errors += 1
            return
        ptype, topic_id, publisher_id, seq, frag_index, frag_count, ts, _ = fields
        if ptype == PacketType.DATA:
            sub = self.subscriptions.get(topic_id)
            if sub is None:
                return
            self.ctx.charge(self.cost.frag_ns)
            now = self.ctx.stamp()
            result, payload, publish_ts = sub.buffer.feed(
                publisher_id, seq, frag_index, frag_count, ts,
                memoryview(datagram)[HEADER_SIZE:], now)
            if result is FeedResult.COMPLETE:
                self._deliver(sub, publisher_id, seq, payload, publish_ts)
        elif ptype == PacketType.NACK:
            pub = self.publishers.get(topic_id)
            if pub is not None and publisher_id == self.node_id:
                pub.resend(bitmap_to_indices(
                    bytes(datagram[HEADER_SIZE:]), frag_count), seq, src)
        # HEARTBEAT packets are defined on the wire but unused by this
        # receiver-driven repair protocol.

    def _deliver(self, sub: "Subscription", publisher_id: int, seq: int,
                 payload: bytes, publish_ts_ns: int) -> None:
        ctx, cost, topic = self.ctx, self.cost, sub.topic_id
        self.trace(topic, seq, Stage.WIRE_RECV_COMPLETE, ctx.stamp())
        ctx.charge(cost.stage_ns)
        self.trace(topic, seq, Stage.ADAPTER_DELIVER, ctx.stamp())
        ctx.charge(cost.stage_ns)
        self.trace(topic, seq, Stage.CLIENT_DELIVER, ctx.stamp())
        ctx.charge(cost.stage_ns)
        receive_ts = ctx.stamp()
        self.trace(topic, seq, Stage.CALLBACK_BEGIN, receive_ts)
        latency = receive_ts - publish_ts_ns
        status = SampleStatus.IN_TIME if latency <= sub.period_ns else SampleStatus.LATE
        sub.samples.append(SampleRecord(
            self.run_id, topic, publisher_id, self.node_id, seq,
            publish_ts_ns, receive_ts, latency, status))
        if sub.expected_digest is not None:
            sub.digest_checked += 1
            if hashlib.sha256(payload).digest() != sub.expected_digest:
                sub.digest_mismatches += 1
        ctx.charge(cost.stage_ns)
        self.trace(topic, seq, Stage.CALLBACK_END, ctx.stamp())

    # -- reliability: subscriber-driven repair

    def repair_tick(self, deadline_ns: int) -> None:
        now = self.ctx.stamp()
        for sub in self.subscriptions.values():
            nacks = sub.buffer.repair_round(now, sub.repair_interval_ns,
                                            sub.max_repair_rounds)
            for nack in nacks:
                self.ctx.charge(self.cost.frag_ns)
                self.send_fn(sub.publisher_dest, encode_nack(nack), self.ctx.stamp())


def _unwired_send(dest, datagram, send_ns):  # pragma: no cover - wiring bug guard
    raise RuntimeError("node send function was never wired to a channel")


class Subscription:
    __slots__ = ("topic_id", "publisher_node", "publisher_dest", "period_ns",
                 "buffer", "samples", "repair_interval_ns", "max_repair_rounds",
                 "expected_digest", "digest_checked", "digest_mismatches")

    def __init__(self, topic_id: int, publisher_node: int, publisher_dest,
                 period_ns: int, repair_interval_ns: int = 5_000_000,
                 max_repair_rounds: int = 10, expected_digest: Optional[bytes] = None):
        self.topic_id = topic_id
        self.publisher_node = publisher_node
        self.publisher_dest = publisher_dest
        self.period_ns = period_ns
        self.buffer = ReassemblyBuffer(topic_id)
        self.samples: list[SampleRecord] = []
        self.repair_interval_ns = repair_interval_ns
        self.max_repair_rounds = max_repair_rounds
        self.expected_digest = expected_digest
        self.digest_checked = 0
        self.digest_mismatches = 0


class Publisher:
    """One topic's publisher handle, owned by a publisher node."""

    __slots__ = ("node", "topic_id", "payload", "fragment_limit", "subscribers",
                 "period_ns", "t0_ns", "total_ticks", "next_seq", "records",
                 "store", "store_retention_ns", "reliable", "send_errors")

    def __init__(self, node: Node, topic_id: int, payload: bytes, fragment_limit: int,
                 subscribers: list, period_ns: int, t0_ns: int, total_ticks: int,
                 reliable: bool = False, store_retention_ns: int = 0):
        self.node = node
        self.topic_id = topic_id
        self.payload = payload
        self.fragment_limit = fragment_limit
        self.subscribers = subscribers
        self.period_ns = period_ns
        self.t0_ns = t0_ns
        self.total_ticks = total_ticks
        self.next_seq = 0
        self.records: list[PublisherRecord] = []
        self.store: dict[int, tuple] = {}   # seq -> (publish_ts, datagrams)
        self.store_retention_ns = store_retention_ns
        self.reliable = reliable
        self.send_errors: list[str] = []

    def on_tick(self, deadline_ns: int) -> None:
        self.publish(deadline_ns)

    def publish(self, deadline_ns: int) -> int:
        """Run the full publisher-side pipeline for one message.

        Emits the six publisher stages in order, stamps the header at
        APP_PUBLISH, performs the serialization copy, fragments the
        payload, and hands every fragment to the channel for every
        subscriber of the topic.
        """
        node, ctx, cost = self.node, self.node.ctx, self.node.cost
        seq = self.next_seq
        self.next_seq += 1
        topic = self.topic_id

        t_app = ctx.stamp()
        node.trace(topic, seq, Stage.APP_PUBLISH, t_app)
        ctx.charge(cost.stage_ns)
        node.trace(topic, seq, Stage.CLIENT_PUBLISH, ctx.stamp())
        ctx.charge(cost.stage_ns)
        node.trace(topic, seq, Stage.ADAPTER_PUBLISH, ctx.stamp())
        ctx.charge(cost.stage_ns)
        node.trace(topic, seq, Stage.SERIALIZE_BEGIN, ctx.stamp())
        blob = serialize_message(MessageHeader(seq, t_app), self.payload)
        ctx.charge(cost.serialize_ns(len(self.payload)))
        node.trace(topic, seq, Stage.SERIALIZE_END, ctx.stamp())

        fragments = fragment_payload(memoryview(blob)[MESSAGE_HEADER_SIZE:],
                                     self.fragment_limit)
        frag_count = len(fragments)
        datagrams = [
            encode_packet(WirePacket(PacketType.DATA, topic, node.node_id, seq,
                                     i, frag_count, t_app, frag))
            for i, frag in enumerate(fragments)
        ]
        ctx.charge(frag_count * len(self.subscribers) * cost.frag_ns)
        t_wire = ctx.stamp()
        node.trace(topic, seq, Stage.WIRE_SEND, t_wire)

        # Rotate the subscriber order per message so no subscriber is
        # systematically first on the wire.
        rot = seq % len(self.subscribers) if self.subscribers else 0
        order = self.subscribers[rot:] + self.subscribers[:rot]
        try:
            for dest in order:
                for datagram in datagrams:
                    node.send_fn(dest, datagram, t_wire)
        except OSError as exc:
            # Transport failure: the message is recorded unsent. A partial
            # send may still reach some subscribers; only real UDP can hit
            # this path, where exact accounting is best-effort anyway.
            self.send_errors.append(f"seq {seq}: {exc}")
            self.records.append(PublisherRecord(
                node.run_id, topic, node.node_id, seq, deadline_ns, None,
                SendStatus.UNSENT))
            return seq

        status = (SendStatus.SENT_IN_TIME if t_app <= deadline_ns + self.period_ns
                  else SendStatus.SENT_LATE)
        self.records.append(PublisherRecord(
            node.run_id, topic, node.node_id, seq, deadline_ns, t_app, status))

        if self.reliable:
            self.store[seq] = (t_app, datagrams)
            self._prune_store(t_app)
        return seq

    def _prune_store(self, now_ns: int) -> None:
        horizon = now_ns - self.store_retention_ns
        for seq in list(self.store):
            if self.store[seq][0] >= horizon:
                break
            del self.store[seq]

    def resend(self, missing: list, seq: int, requester) -> None:
        stored = self.store.get(seq)
        if stored is None:
            return          # pruned or never stored: repair cannot help
        _, datagrams = stored
        node = self.node
        node.ctx.charge(len(missing) * node.cost.frag_ns)
        now = node.ctx.stamp()
        for i in missing:
            if i < len(datagrams):
                node.send_fn(requester, datagrams[i], now)


# --------------------------------------------------------------------------
# Drivers


def spin(node: Node, until_ns: int) -> int:
    """Drive one node's executor until the deadline; returns the number of
    processed events (timer ticks plus transport events).

    Each iteration executes the earliest due timer tick if any, otherwise
    processes one incoming transport event, otherwise blocks until the
    next deadline or datagram.  Ticks that became due while a callback ran
    execute afterwards in deadline order; none are skipped.
    """
    node.stop_ns = until_ns
    processed = 0
    while True:
        now = node.ctx.now_ns()
        if now >= until_ns:
            break
        work = node.next_work(now)
        if work is not None:
            node.run_work(work, now)
            processed += 1
            continue
        nxt = node.next_event_time()
        wait_until = until_ns if nxt is None else min(until_ns, nxt)
        if wait_until > now:
            got = node.poll_source(wait_until - now)
            if got is not None:
                datagram, src = got
                node.inbox.append((node.ctx.now_ns(), src, datagram))
    return processed


class SimKernel:
    """Deterministic discrete-event co-simulation of many node executors.

    Nodes are woken at candidate work instants; a busy node (its context
    cursor still in a callback) is re-woken when it frees up, so callbacks
    never overlap within a node and ties resolve by wake order.  At most
    one wakeup per node is kept pending: any later wakeup is re-derived
    after the earlier one fires, which keeps the heap linear in the number
    of events instead of quadratic in a node's backlog.
    """

    def __init__(self):
        self._heap: list = []
        self._counter = 0
        self.nodes: dict[int, Node] = {}

    def add_node(self, node: Node) -> None:
        self.nodes[node.node_id] = node

    def wake(self, node: Node, t_ns: int) -> None:
        if node.wake_at_ns is not None and node.wake_at_ns <= t_ns:
            return  # an earlier or equal wakeup is already pending
        node.wake_at_ns = t_ns
        heappush(self._heap, (t_ns, self._counter, node))
        self._counter += 1

    def deliver(self, dest: int, src: int, arrival_ns: int, datagram) -> None:
        node = self.nodes[dest]
        node.inbox.append((arrival_ns, src, datagram))
        self.wake(node, arrival_ns)

    def start(self) -> None:
        for node in self.nodes.values():
            nxt = node.next_event_time()
            if nxt is not None:
                self.wake(node, nxt)

    def run(self) -> int:
        processed = 0
        heap = self._heap
        while heap:
            t, _, node = heappop(heap)
            if node.wake_at_ns != t:
                continue  # superseded by an earlier wakeup
            node.wake_at_ns = None
            if t < node.busy_until_ns:
                self.wake(node, node.busy_until_ns)
                continue
            work = node.next_work(t)
            if work is not None:
                node.busy_until_ns = node.run_work(work, t)
                processed += 1
                self.wake(node, node.busy_until_ns)
            else:
                nxt = node.next_event_time()
                if nxt is not None and nxt > t:
                    self.wake(node, nxt)
        return processed
