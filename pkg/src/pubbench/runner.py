"""Benchmark orchestration: one run or a whole parameter sweep.

A run starts every subscriber first, waits out the discovery window, then
starts all publisher schedules at a common t0.  Publisher timers stop at
t0 + duration; subscribers keep draining for the configured drain window,
after which undelivered messages are lost.  All records are merged and
sorted deterministically once every node has stopped.

The SIM backend executes all nodes on one virtual timeline inside the
calling thread, which makes runs bit-reproducible for a given seed.  The
UDP backend runs one thread per node against real loopback sockets and
the shared monotonic clock.
"""

from __future__ import annotations

import hashlib
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import report as report_io
from .analysis import build_report, summary_text
from .model import (
    Backend,
    BenchmarkConfig,
    Reliability,
    SweepMatrix,
    TopologySpec,
    build_topology,
    config_text,
    expand_sweep,
    expected_message_count,
)
from .stack import (
    STAGE_ORDER,
    CostModel,
    MonotonicContext,
    Node,
    Publisher,
    PublisherRecord,
    SampleRecord,
    SampleStatus,
    SendStatus,
    SimContext,
    SimKernel,
    Subscription,
    Timer,
    spin,
)
from .transport import ChannelConfig, SimChannel, UdpEndpoint

# Headroom between computing t0 and the first publisher deadline, so UDP
# threads are all spinning before the schedule opens.
_UDP_START_MARGIN_NS = 100_000_000


class RunError(RuntimeError):
    """A benchmark run could not be executed (startup, sockets, threads)."""


@dataclass
class RunArtifacts:
    config: BenchmarkConfig
    samples: list = field(default_factory=list)
    publisher_records: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    wall_start_ns: int = 0
    wall_end_ns: int = 0
    digest_checked: int = 0
    digest_mismatches: int = 0
    datagrams_sent: int = 0
    datagrams_dropped: int = 0


def _publisher_payload(config: BenchmarkConfig, node_id: int) -> bytes:
    rng = random.Random((config.seed << 20) ^ (node_id + 1))
    return rng.randbytes(config.payload_bytes)


def config_hash(config: BenchmarkConfig) -> str:
    return hashlib.sha256(config_text(config).encode("utf-8")).hexdigest()[:16]


def run_benchmark(config: BenchmarkConfig, verify_payloads: bool = False) -> RunArtifacts:
    """Execute one fully-resolved benchmark configuration."""
    topology = build_topology(config.node_count, config.topology_kind)
    wall_start = time.monotonic_ns()
    if config.backend == Backend.SIM:
        nodes, sent, dropped = _run_sim(config, topology, verify_payloads)
    else:
        nodes, sent, dropped = _run_udp(config, topology, verify_payloads)
    artifacts = _merge(config, topology, nodes)
    artifacts.wall_start_ns = wall_start
    artifacts.wall_end_ns = time.monotonic_ns()
    artifacts.datagrams_sent = sent
    artifacts.datagrams_dropped = dropped
    return artifacts


# --------------------------------------------------------------------------
# Backend-specific execution


def _windows(config: BenchmarkConfig, t0_ns: int):
    t_end = t0_ns + config.duration_ns
    sub_stop = t_end + config.drain_ms * 1_000_000
    # Reliable publishers must stay alive through the drain to serve NACKs.
    pub_stop = sub_stop if config.reliability == Reliability.RELIABLE else t_end
    return t_end, pub_stop, sub_stop


def _wire_topology(config: BenchmarkConfig, topology: TopologySpec,
                   nodes: dict, dest_of, t0_ns: int, t_end_ns: int,
                   verify_payloads: bool) -> None:
    """Create publisher handles, subscriptions, and timers on the nodes."""
    total = expected_message_count(config)
    period = config.period_ns
    repair_interval_ns = int(config.repair_interval_ms * 1_000_000)
    reliable = config.reliability == Reliability.RELIABLE
    retention = ((config.max_repair_rounds + 3) * repair_interval_ns
                 + 2 * config.sim_delay_ns + 100_000_000)

    for k, topic in enumerate(topology.topics):
        pub_node = nodes[topic.publisher_node]
        payload = _publisher_payload(config, topic.publisher_node)
        digest = hashlib.sha256(payload).digest() if verify_payloads else None
        publisher = Publisher(
            pub_node, topic.topic_id, payload, config.fragment_payload_bytes,
            [dest_of(s) for s in topic.subscriber_nodes], period,
            t0_ns + k * config.phase_offset_ns, total,
            reliable=reliable, store_retention_ns=retention)
        pub_node.publishers[topic.topic_id] = publisher
        pub_node.timers.append(Timer(
            publisher.t0_ns, period, publisher.on_tick, ticks=total, cap_ns=t_end_ns))
        for sub_id in topic.subscriber_nodes:
            nodes[sub_id].subscriptions[topic.topic_id] = Subscription(
                topic.topic_id, topic.publisher_node, dest_of(topic.publisher_node),
                period, repair_interval_ns, config.max_repair_rounds, digest)

    if reliable:
        # First repair pass one interval after t0: nothing can be pending
        # before publishers start, and the deadline must be anchored to the
        # run's clock (the UDP backend runs on absolute monotonic time).
        for spec in topology.subscriber_nodes:
            node = nodes[spec.node_id]
            node.timers.append(Timer(
                t0_ns + repair_interval_ns, repair_interval_ns, node.repair_tick))


def _run_sim(config: BenchmarkConfig, topology: TopologySpec,
             verify_payloads: bool) -> dict:
    cost = CostModel(config.sim_stage_cost_ns, config.sim_serialize_ns_per_byte,
                     config.sim_frag_ns)
    kernel = SimKernel()
    channel = SimChannel(
        ChannelConfig(config.loss_prob, config.sim_delay_ns, config.seed),
        kernel.deliver)

    nodes: dict = {}
    for spec in topology.nodes:
        node = Node(spec.node_id, config.run_id, SimContext(0), cost)
        node.send_fn = (lambda dest, datagram, send_ns, _src=spec.node_id:
                        channel.send(dest, _src, datagram, send_ns))
        nodes[spec.node_id] = node
        kernel.add_node(node)

    t0 = config.discovery_wait_ms * 1_000_000
    t_end, pub_stop, sub_stop = _windows(config, t0)
    _wire_topology(config, topology, nodes, lambda nid: nid, t0, t_end,
                   verify_payloads)
    for spec in topology.nodes:
        nodes[spec.node_id].stop_ns = (
            pub_stop if nodes[spec.node_id].publishers else sub_stop)

    kernel.start()
    kernel.run()
    return nodes, channel.sent_count, channel.dropped_count


def _run_udp(config: BenchmarkConfig, topology: TopologySpec,
             verify_payloads: bool) -> dict:
    channel_config = ChannelConfig(socket_buffer_bytes=config.udp_socket_buffer_bytes)
    endpoints: dict = {}
    try:
        for spec in topology.nodes:
            endpoints[spec.node_id] = UdpEndpoint(channel_config)
    except OSError as exc:
        for ep in endpoints.values():
            ep.close()
        raise RunError(f"UDP socket allocation failed: {exc}") from exc

    ctx = MonotonicContext()
    cost = CostModel()  # charges are no-ops on the real clock
    nodes: dict = {}
    for spec in topology.nodes:
        node = Node(spec.node_id, config.run_id, ctx, cost)
        node.endpoint = endpoints[spec.node_id]
        node.send_fn = (lambda dest, datagram, send_ns, _ep=endpoints[spec.node_id]:
                        _ep.send(dest, datagram))
        nodes[spec.node_id] = node

    t0 = (time.monotonic_ns() + config.discovery_wait_ms * 1_000_000
          + _UDP_START_MARGIN_NS)
    t_end, pub_stop, sub_stop = _windows(config, t0)
    _wire_topology(config, topology, nodes,
                   lambda nid: endpoints[nid].addr, t0, t_end, verify_payloads)

    publisher_ids = [s.node_id for s in topology.publisher_nodes]
    subscriber_ids = [s.node_id for s in topology.subscriber_nodes]
    barrier = threading.Barrier(len(publisher_ids) + 1)
    errors: list = []

    def _spin_node(node_id: int, stop_ns: int, wait_barrier: bool) -> None:
        try:
            if wait_barrier:
                barrier.wait(timeout=30)
            spin(nodes[node_id], stop_ns)
        except Exception as exc:  # noqa: BLE001 - reported after join
            errors.append(f"node {node_id}: {exc!r}")

    threads = [threading.Thread(target=_spin_node, args=(nid, sub_stop, False),
                                name=f"sub-{nid}", daemon=True)
               for nid in subscriber_ids]
    threads += [threading.Thread(target=_spin_node, args=(nid, pub_stop, True),
                                 name=f"pub-{nid}", daemon=True)
                for nid in publisher_ids]
    try:
        for t in threads[:len(subscriber_ids)]:
            t.start()
        time.sleep(config.discovery_wait_ms / 1000.0)
        for t in threads[len(subscriber_ids):]:
            t.start()
        barrier.wait(timeout=30)
        for t in threads:
            t.join()
    finally:
        sent = sum(ep.sent_count for ep in endpoints.values())
        for ep in endpoints.values():
            ep.close()
    if errors:
        raise RunError("node failure: " + "; ".join(errors))
    return nodes, sent, 0


# --------------------------------------------------------------------------
# Artifact merge


def _merge(config: BenchmarkConfig, topology: TopologySpec, nodes: dict) -> RunArtifacts:
    artifacts = RunArtifacts(config)
    samples: list = []
    publisher_records: list = []
    traces: list = []

    for topic in topology.topics:
        publisher = nodes[topic.publisher_node].publishers[topic.topic_id]
        publisher_records.extend(publisher.records)
        # Ticks whose firing window closed never published: unsent backlog.
        for seq in range(publisher.next_seq, publisher.total_ticks):
            publisher_records.append(PublisherRecord(
                config.run_id, topic.topic_id, topic.publisher_node, seq,
                publisher.t0_ns + seq * publisher.period_ns, None, SendStatus.UNSENT))
        sent = {r.seq: r for r in publisher.records
                if r.send_status != SendStatus.UNSENT}
        for sub_id in topic.subscriber_nodes:
            subscription = nodes[sub_id].subscriptions[topic.topic_id]
            samples.extend(subscription.samples)
            delivered = {s.seq for s in subscription.samples}
            for seq, record in sent.items():
                if seq not in delivered:
                    samples.append(SampleRecord(
                        config.run_id, topic.topic_id, topic.publisher_node,
                        sub_id, seq, record.publish_ts_ns, None, None,
                        SampleStatus.LOST))
            artifacts.digest_checked += subscription.digest_checked
            artifacts.digest_mismatches += subscription.digest_mismatches

    for node in nodes.values():
        traces.extend(node.traces)

    samples.sort(key=lambda s: (s.topic_id, s.seq, s.subscriber_node))
    publisher_records.sort(key=lambda r: (r.topic_id, r.publisher_node, r.seq))
    traces.sort(key=lambda e: (e.topic_id, e.seq, e.node_id, STAGE_ORDER[e.stage]))
    artifacts.samples = samples
    artifacts.publisher_records = publisher_records
    artifacts.traces = traces
    return artifacts


# --------------------------------------------------------------------------
# Persistence and sweeps


def persist_run(artifacts: RunArtifacts, out_dir, in_time_only: bool = False) -> Path:
    """Write config.txt, the three record CSVs, report.csv, and summary.txt."""
    config = artifacts.config
    run_dir = Path(out_dir) / config.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / report_io.CONFIG_FILE).write_text(config_text(config), encoding="utf-8")
    report_io.emit_samples(run_dir / report_io.SAMPLES_FILE, artifacts.samples)
    report_io.emit_publishers(run_dir / report_io.PUBLISHERS_FILE,
                              artifacts.publisher_records)
    report_io.emit_traces(run_dir / report_io.TRACES_FILE, artifacts.traces)
    rows = build_report(config.run_id, artifacts.samples, artifacts.publisher_records,
                        artifacts.traces, config.period_ns, in_time_only=in_time_only)
    report_io.emit_report(run_dir / report_io.REPORT_FILE, rows)
    (run_dir / report_io.SUMMARY_FILE).write_text(
        summary_text(config.run_id, rows), encoding="utf-8")
    return run_dir


def run_sweep(matrix: SweepMatrix, out_dir, on_result=None) -> list:
    """Run every expanded config sequentially, persisting results as we go.

    A failing run is recorded in the index and the sweep continues; an
    unwritable output directory aborts the sweep.  Returns the index rows
    (run_id, status, config_hash).
    """
    configs = expand_sweep(matrix)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    index_rows: list = []
    for config in configs:
        try:
            artifacts = run_benchmark(config)
            persist_run(artifacts, out_path)
            status = "ok"
        except OSError:
            raise  # unwritable output or socket teardown: abort the sweep
        except Exception as exc:  # noqa: BLE001 - recorded per run
            status = f"failed: {exc}"
        index_rows.append((config.run_id, status, config_hash(config)))
        report_io.emit_index(out_path / report_io.INDEX_FILE, index_rows)
        if on_result is not None:
            on_result(config, status)
    return index_rows
