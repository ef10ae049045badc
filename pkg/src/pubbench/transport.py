"""Wire framing, fragmentation/reassembly, and delivery channels.

A message is carried as one or more fragments, each a single datagram:
a fixed little-endian header followed by a payload slice.  The header
carries the message sequence number and publish timestamp in every
fragment, so latency stays computable even when fragment 0 has to be
repaired.

Two interchangeable channels move datagrams between nodes:

* ``SimChannel`` — deterministic in-process delivery with seeded
  per-datagram loss injection and a fixed one-way delay.
* ``UdpEndpoint`` — a real UDP socket bound to loopback; loss can only
  occur genuinely (socket buffer overflow) and is counted as real loss.
"""

from __future__ import annotations

import random
import select
import socket
import struct
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Callable, Iterator, Union

MAGIC = b"PBW1"

# magic, packet_type, topic_id, publisher_id, seq, frag_index, frag_count,
# publish_ts_ns, payload_len -- little-endian, declared order.
HEADER_FORMAT = "<4sBHHIHHQI"
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
assert HEADER_SIZE == 29

# Real UDP caps a datagram at 65507 bytes, so UDP configs keep fragment
# payloads at 65000 to leave room for the header.  The simulated channel
# accepts one binary step more (65536) so the 64 KiB fragment-size effect
# can be studied with power-of-two payloads.
MAX_DATAGRAM = 65507
MAX_FRAGMENT_PAYLOAD = 65536
MAX_ENCODED = HEADER_SIZE + MAX_FRAGMENT_PAYLOAD


class PacketType(IntEnum):
    DATA = 0
    NACK = 1
    HEARTBEAT = 2


class WireFormatError(ValueError):
    """Malformed datagram: bad magic, truncation, or length mismatch."""


class ReassemblyError(ValueError):
    """Fragment metadata inconsistent with earlier fragments of the same message."""


@dataclass(frozen=True)
class WirePacket:
    packet_type: PacketType
    topic_id: int
    publisher_id: int
    seq: int
    frag_index: int
    frag_count: int
    publish_ts_ns: int
    payload: bytes


def encode_packet(packet: WirePacket) -> bytes:
    """Serialize a packet; validates the WirePacket invariants."""
    if not 0 <= packet.frag_index < packet.frag_count:
        raise WireFormatError(
            f"frag_index {packet.frag_index} out of range for frag_count {packet.frag_count}")
    if HEADER_SIZE + len(packet.payload) > MAX_ENCODED:
        raise WireFormatError(f"encoded packet exceeds {MAX_ENCODED} bytes")
    header = struct.pack(
        HEADER_FORMAT, MAGIC, packet.packet_type, packet.topic_id,
        packet.publisher_id, packet.seq, packet.frag_index, packet.frag_count,
        packet.publish_ts_ns, len(packet.payload))
    return b"".join((header, packet.payload))  # accepts bytes-like payloads


def decode_header(data) -> tuple:
    """Parse the fixed header of a datagram without copying the payload.

    Returns (packet_type, topic_id, publisher_id, seq, frag_index,
    frag_count, publish_ts_ns, payload_len).  The payload itself is
    ``data[HEADER_SIZE:]``; hot paths take it as a memoryview.
    """
    if len(data) < HEADER_SIZE:
        raise WireFormatError(f"truncated datagram: {len(data)} < {HEADER_SIZE} bytes")
    magic, ptype, topic_id, publisher_id, seq, frag_index, frag_count, ts, plen = \
        struct.unpack_from(HEADER_FORMAT, data)
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {bytes(magic)!r}")
    if len(data) != HEADER_SIZE + plen:
        raise WireFormatError(
            f"payload_len {plen} does not match datagram size {len(data)}")
    return PacketType(ptype), topic_id, publisher_id, seq, frag_index, frag_count, ts, plen


def decode_packet(data: bytes) -> WirePacket:
    """Inverse of encode_packet: decode(encode(p)) == p for every valid p."""
    ptype, topic_id, publisher_id, seq, frag_index, frag_count, ts, plen = decode_header(data)
    return WirePacket(ptype, topic_id, publisher_id, seq, frag_index, frag_count,
                      ts, bytes(data[HEADER_SIZE:]))


def fragment_payload(payload, limit: int) -> list:
    """Slice a payload into fragments of at most ``limit`` bytes.

    Always yields at least one fragment (a header-only message for an
    empty payload); all fragments except the last are exactly ``limit``
    bytes, and their concatenation reproduces the payload.
    """
    if limit < 1:
        raise ValueError("fragment payload limit must be >= 1")
    n = len(payload)
    if n == 0:
        return [payload[0:0]]
    return [payload[i:i + limit] for i in range(0, n, limit)]


def fragment_count(payload_bytes: int, limit: int) -> int:
    return max(1, -(-payload_bytes // limit))


# --------------------------------------------------------------------------
# NACK bookkeeping


@dataclass(frozen=True)
class NackRecord:
    topic_id: int
    publisher_id: int
    seq: int
    frag_count: int
    missing_bitmap: bytes

    def missing_indices(self) -> list:
        return bitmap_to_indices(self.missing_bitmap, self.frag_count)


def indices_to_bitmap(missing, frag_count: int) -> bytes:
    bitmap = bytearray((frag_count + 7) // 8)
    for i in missing:
        bitmap[i >> 3] |= 1 << (i & 7)
    return bytes(bitmap)


def bitmap_to_indices(bitmap: bytes, frag_count: int) -> list:
    return [i for i in range(frag_count) if bitmap[i >> 3] & (1 << (i & 7))]


def encode_nack(nack: NackRecord) -> bytes:
    return encode_packet(WirePacket(
        PacketType.NACK, nack.topic_id, nack.publisher_id, nack.seq,
        frag_index=0, frag_count=nack.frag_count, publish_ts_ns=0,
        payload=nack.missing_bitmap))


# --------------------------------------------------------------------------
# Reassembly


class FeedResult(Enum):
    COMPLETE = "COMPLETE"
    PENDING = "PENDING"
    DUPLICATE = "DUPLICATE"


class _Pending:
    __slots__ = ("frag_count", "parts", "remaining", "first_arrival_ns",
                 "publish_ts_ns", "nack_rounds")

    def __init__(self, frag_count: int, first_arrival_ns: int, publish_ts_ns: int):
        self.frag_count = frag_count
        self.parts: list = [None] * frag_count
        self.remaining = frag_count
        self.first_arrival_ns = first_arrival_ns
        self.publish_ts_ns = publish_ts_ns
        self.nack_rounds = 0


class ReassemblyBuffer:
    """Per-subscription fragment collector.

    A message completes exactly once, when all of its fragments have been
    seen; duplicate fragments (including anything for an already-completed
    or abandoned message) are idempotent.
    """

    def __init__(self, topic_id: int):
        self.topic_id = topic_id
        self.pending: dict = {}        # (publisher_id, seq) -> _Pending
        self.finished: set = set()     # completed or abandoned keys
        self.completed_count = 0
        self.abandoned: list = []      # (publisher_id, seq) given up on

    def feed(self, publisher_id: int, seq: int, frag_index: int, frag_count: int,
             publish_ts_ns: int, payload, now_ns: int):
        """Account one DATA fragment.

        Returns (FeedResult, assembled_payload, publish_ts_ns); the last two
        are None unless the result is COMPLETE.
        """
        if frag_count < 1:
            raise ReassemblyError(f"frag_count must be >= 1, got {frag_count}")
        if not 0 <= frag_index < frag_count:
            raise ReassemblyError(
                f"frag_index {frag_index} out of range for frag_count {frag_count}")
        key = (publisher_id, seq)
        if key in self.finished:
            return FeedResult.DUPLICATE, None, None
        entry = self.pending.get(key)
        if entry is None:
            entry = _Pending(frag_count, now_ns, publish_ts_ns)
            self.pending[key] = entry
        elif entry.frag_count != frag_count:
            raise ReassemblyError(
                f"frag_count {frag_count} conflicts with earlier value "
                f"{entry.frag_count} for seq {seq}")
        if entry.parts[frag_index] is not None:
            return FeedResult.DUPLICATE, None, None
        entry.parts[frag_index] = payload
        entry.remaining -= 1
        if entry.remaining:
            return FeedResult.PENDING, None, None
        assembled = b"".join(entry.parts)
        del self.pending[key]
        self.finished.add(key)
        self.completed_count += 1
        return FeedResult.COMPLETE, assembled, entry.publish_ts_ns

    def feed_packet(self, packet: WirePacket, now_ns: int = 0):
        if packet.packet_type != PacketType.DATA:
            raise ReassemblyError("only DATA packets feed reassembly")
        return self.feed(packet.publisher_id, packet.seq, packet.frag_index,
                         packet.frag_count, packet.publish_ts_ns, packet.payload, now_ns)

    def repair_round(self, now_ns: int, repair_interval_ns: int,
                     max_repair_rounds: int) -> list:
        """One NACK pass: list the missing fragments of every stale message.

        A message is stale once it has sat incomplete for longer than the
        repair interval.  A message that has already been NACKed
        ``max_repair_rounds`` times is abandoned (recorded lost) and never
        NACKed again.
        """
        nacks: list = []
        for key in list(self.pending):
            entry = self.pending[key]
            if now_ns - entry.first_arrival_ns <= repair_interval_ns:
                continue
            if entry.nack_rounds >= max_repair_rounds:
                del self.pending[key]
                self.finished.add(key)
                self.abandoned.append(key)
                continue
            entry.nack_rounds += 1
            missing = [i for i, part in enumerate(entry.parts) if part is None]
            nacks.append(NackRecord(
                self.topic_id, key[0], key[1], entry.frag_count,
                indices_to_bitmap(missing, entry.frag_count)))
        return nacks


def feed_fragment(buffer: ReassemblyBuffer, packet: WirePacket, now_ns: int = 0):
    return buffer.feed_packet(packet, now_ns)


# --------------------------------------------------------------------------
# Channels

# A destination is a node id on the simulated channel and a socket address
# on the UDP channel.
Destination = Union[int, tuple]


@dataclass(frozen=True)
class ChannelConfig:
    loss_prob: float = 0.0
    sim_delay_ns: int = 0
    seed: int = 0
    socket_buffer_bytes: int = 4 * 1024 * 1024


class SimChannel:
    """Deterministic in-process datagram channel with loss injection.

    Every datagram consumes exactly one draw from a single seeded stream,
    in global send order, and is dropped iff the draw is below
    ``loss_prob``; identical (seed, config, send order) therefore yields
    identical delivery outcomes.  Delivered datagrams arrive
    ``sim_delay_ns`` after the send timestamp via the ``deliver`` callback:
    deliver(dest_node, src_node, arrival_ns, datagram).
    """

    def __init__(self, config: ChannelConfig,
                 deliver: Callable[[int, int, int, bytes], None]):
        self._loss_prob = config.loss_prob
        self._delay_ns = config.sim_delay_ns
        self._deliver = deliver
        self._rng = random.Random(config.seed)
        self.sent_count = 0
        self.dropped_count = 0

    def send(self, dest: int, src: int, datagram: bytes, send_ns: int) -> bool:
        """Returns True if the datagram was delivered, False if dropped."""
        self.sent_count += 1
        if self._rng.random() < self._loss_prob:
            self.dropped_count += 1
            return False
        self._deliver(dest, src, send_ns + self._delay_ns, datagram)
        return True


class UdpEndpoint:
    """One loopback UDP socket owned by a single node."""

    def __init__(self, config: ChannelConfig):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF,
                              config.socket_buffer_bytes)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF,
                              config.socket_buffer_bytes)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.setblocking(False)
        self.addr = self._sock.getsockname()
        self.sent_count = 0

    def send(self, dest: tuple, datagram: bytes) -> None:
        self._sock.sendto(datagram, dest)
        self.sent_count += 1

    def poll(self, timeout_s: float):
        """Wait up to timeout_s for one datagram; returns (data, src) or None."""
        ready, _, _ = select.select([self._sock], [], [], max(0.0, timeout_s))
        if not ready:
            return None
        try:
            return self._sock.recvfrom(MAX_DATAGRAM + 1)
        except BlockingIOError:  # raced with another reader; there is none, but be safe
            return None

    def close(self) -> None:
        self._sock.close()
