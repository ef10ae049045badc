from collections import defaultdict

import pytest

import pubbench.runner as runner_mod
from pubbench.model import Reliability, SweepMatrix, TopologyKind, validate_config
from pubbench.report import INDEX_FILE, load_index
from pubbench.runner import RunError, config_hash, persist_run, run_benchmark, run_sweep
from pubbench.stack import STAGE_ORDER, SampleStatus, SendStatus, Stage


def sim_config(**kw):
    raw = {"node_count": 2, "topology_kind": "PAIRED", "payload_bytes": 16,
           "frequency_hz": 10, "duration_s": 6, "backend": "SIM", "seed": 42,
           "discovery_wait_ms": 10}
    raw.update(kw)
    return validate_config(raw)


class TestSingleRun:
    def test_desk_scale_accounting(self):
        art = run_benchmark(sim_config())
        assert len(art.publisher_records) == 60
        assert all(r.send_status == SendStatus.SENT_IN_TIME
                   for r in art.publisher_records)
        assert len(art.samples) == 60
        assert all(s.status == SampleStatus.IN_TIME for s in art.samples)

    def test_full_loss_best_effort(self):
        art = run_benchmark(sim_config(loss_prob=1.0, duration_s=2))
        assert len(art.publisher_records) == 20
        assert all(r.send_status == SendStatus.SENT_IN_TIME
                   for r in art.publisher_records)
        assert len(art.samples) == 20
        assert all(s.status == SampleStatus.LOST for s in art.samples)
        assert all(s.receive_ts_ns is None and s.latency_ns is None
                   for s in art.samples)

    def test_deterministic_artifacts(self, tmp_path):
        cfg = sim_config(loss_prob=0.3, payload_bytes=5000,
                         fragment_payload_bytes=1000, duration_s=3)
        dir_a = persist_run(run_benchmark(cfg), tmp_path / "a")
        dir_b = persist_run(run_benchmark(cfg), tmp_path / "b")
        for name in ("samples.csv", "publishers.csv", "traces.csv",
                     "report.csv", "config.txt", "summary.txt"):
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes(), name

    def test_different_seed_differs(self):
        base = sim_config(loss_prob=0.5, duration_s=2)
        other = sim_config(loss_prob=0.5, duration_s=2, seed=43)
        lost_a = sum(s.status == SampleStatus.LOST
                     for s in run_benchmark(base).samples)
        lost_b = sum(s.status == SampleStatus.LOST
                     for s in run_benchmark(other).samples)
        assert lost_a != lost_b or base.run_id != other.run_id

    def test_no_publish_before_t0(self):
        art = run_benchmark(sim_config(discovery_wait_ms=250))
        t0 = 250 * 1_000_000
        for e in art.traces:
            if e.stage == Stage.APP_PUBLISH:
                assert e.ts_ns >= t0

    def test_stage_order_invariant(self):
        art = run_benchmark(sim_config(node_count=4, topology_kind="ONE_TO_MANY",
                                       payload_bytes=3000,
                                       fragment_payload_bytes=1000, duration_s=2))
        pub_events = defaultdict(dict)
        sub_events = defaultdict(dict)
        for e in art.traces:
            if STAGE_ORDER[e.stage] < 6:
                pub_events[(e.topic_id, e.seq)][e.stage] = e.ts_ns
            else:
                sub_events[(e.topic_id, e.seq, e.node_id)][e.stage] = e.ts_ns
        for (topic, seq, _node), stages in sub_events.items():
            chain = list(pub_events[(topic, seq)].items()) + list(stages.items())
            chain.sort(key=lambda kv: STAGE_ORDER[kv[0]])
            assert [s for s, _ in chain] == list(Stage)
            ts = [t for _, t in chain]
            assert ts == sorted(ts)

    def test_latency_non_negative(self):
        art = run_benchmark(sim_config(duration_s=2))
        assert all(s.latency_ns >= 0 for s in art.samples
                   if s.latency_ns is not None)

    def test_callback_non_overlap_per_node(self):
        art = run_benchmark(sim_config(node_count=5, topology_kind="MANY_TO_ONE",
                                       frequency_hz=100, duration_s=1))
        intervals = defaultdict(list)
        begins = {}
        for e in sorted(art.traces, key=lambda e: e.ts_ns):
            if e.stage == Stage.CALLBACK_BEGIN:
                begins[(e.node_id, e.topic_id, e.seq)] = e.ts_ns
            elif e.stage == Stage.CALLBACK_END:
                start = begins.pop((e.node_id, e.topic_id, e.seq))
                intervals[e.node_id].append((start, e.ts_ns))
        assert not begins
        for node, spans in intervals.items():
            spans.sort()
            for (a_start, a_end), (b_start, _) in zip(spans, spans[1:]):
                assert a_end <= b_start, f"overlapping callbacks on node {node}"

    def test_fan_out_delivers_to_every_subscriber(self):
        art = run_benchmark(sim_config(node_count=32,
                                       topology_kind="ONE_TO_MANY", duration_s=1))
        by_seq = defaultdict(set)
        for s in art.samples:
            assert s.status == SampleStatus.IN_TIME
            by_seq[s.seq].add(s.subscriber_node)
        assert all(len(subs) == 31 for subs in by_seq.values())

    def test_conservation_identities(self):
        cfg = sim_config(node_count=4, topology_kind="PAIRED", loss_prob=0.4,
                         payload_bytes=3000, fragment_payload_bytes=1000,
                         duration_s=3)
        art = run_benchmark(cfg)
        per_pub = defaultdict(int)
        sent_by_topic = defaultdict(int)
        for r in art.publisher_records:
            per_pub[r.publisher_node] += 1
            if r.send_status != SendStatus.UNSENT:
                sent_by_topic[r.topic_id] += 1
        assert all(count == 30 for count in per_pub.values())
        per_pair = defaultdict(int)
        for s in art.samples:
            per_pair[(s.topic_id, s.subscriber_node)] += 1
        for (topic, _sub), count in per_pair.items():
            assert count == sent_by_topic[topic]

    def test_gap_free_seq_prefix(self):
        art = run_benchmark(sim_config(duration_s=2))
        seqs = sorted(r.seq for r in art.publisher_records)
        assert seqs == list(range(len(seqs)))

    def test_payload_verification(self):
        art = run_benchmark(sim_config(payload_bytes=10_000,
                                       fragment_payload_bytes=1000, duration_s=2),
                            verify_payloads=True)
        assert art.digest_checked == 20
        assert art.digest_mismatches == 0


class TestDrainWindow:
    def test_late_arrivals_within_drain_keep_latency(self):
        cfg = sim_config(duration_s=1, sim_delay_ns=150 * 1_000_000, drain_ms=500)
        art = run_benchmark(cfg)
        assert all(s.status == SampleStatus.LATE for s in art.samples)
        assert all(s.latency_ns >= 150 * 1_000_000 for s in art.samples)

    def test_no_drain_loses_tail(self):
        cfg = sim_config(duration_s=1, sim_delay_ns=150 * 1_000_000, drain_ms=0)
        art = run_benchmark(cfg)
        lost = [s for s in art.samples if s.status == SampleStatus.LOST]
        # messages still in flight when the window closed are lost
        assert lost
        assert len(art.samples) == 10


class TestReliability:
    def test_reliable_repairs_all_losses(self):
        cfg = sim_config(reliability="RELIABLE", loss_prob=0.2,
                         payload_bytes=8000, fragment_payload_bytes=1000,
                         duration_s=3, max_repair_rounds=1000, drain_ms=1000)
        art = run_benchmark(cfg)
        assert len(art.samples) == 30
        assert sum(s.status == SampleStatus.LOST for s in art.samples) == 0

    def test_best_effort_same_config_loses(self):
        cfg = sim_config(loss_prob=0.2, payload_bytes=8000,
                         fragment_payload_bytes=1000, duration_s=3)
        art = run_benchmark(cfg)
        assert sum(s.status == SampleStatus.LOST for s in art.samples) > 0

    def test_reliable_over_udp(self):
        cfg = validate_config({"node_count": 2, "topology_kind": "PAIRED",
                               "payload_bytes": 4000, "frequency_hz": 10,
                               "duration_s": 1, "backend": "UDP",
                               "reliability": "RELIABLE", "seed": 2,
                               "discovery_wait_ms": 100,
                               "fragment_payload_bytes": 1000})
        art = run_benchmark(cfg)
        assert len(art.samples) == 10
        assert sum(s.status == SampleStatus.LOST for s in art.samples) == 0

    def test_repair_cap_abandons(self):
        # one repair round cannot beat 60% fragment loss reliably
        cfg = sim_config(reliability="RELIABLE", loss_prob=0.6,
                         payload_bytes=8000, fragment_payload_bytes=1000,
                         duration_s=2, max_repair_rounds=1, drain_ms=200)
        art = run_benchmark(cfg)
        assert sum(s.status == SampleStatus.LOST for s in art.samples) > 0


class TestOverload:
    def test_slow_serialize_starves_schedule(self):
        cfg = sim_config(frequency_hz=100, duration_s=1,
                         payload_bytes=2 * 1024 * 1024,
                         fragment_payload_bytes=65000,
                         sim_serialize_ns_per_byte=8.0)
        art = run_benchmark(cfg)
        unsent = [r for r in art.publisher_records
                  if r.send_status == SendStatus.UNSENT]
        sent = [r for r in art.publisher_records
                if r.send_status != SendStatus.UNSENT]
        assert len(art.publisher_records) == 100
        assert unsent and len(sent) < 100
        # sent messages are the gap-free prefix of the schedule
        assert sorted(r.seq for r in sent) == list(range(len(sent)))


class TestSweep:
    @staticmethod
    def _matrix(**fixed):
        base = {"duration_s": 0.5, "seed": 1, "discovery_wait_ms": 10}
        base.update(fixed)
        return SweepMatrix((2, 4), (TopologyKind.PAIRED,), (16,), (10,), base)

    def test_sweep_layout_and_index(self, tmp_path):
        rows = run_sweep(self._matrix(), tmp_path)
        assert len(rows) == 2
        assert all(status == "ok" for _, status, _ in rows)
        loaded = load_index(tmp_path / INDEX_FILE)
        assert [r[0] for r in loaded] == [r[0] for r in rows]
        for run_id, _, digest in loaded:
            run_dir = tmp_path / run_id
            for name in ("config.txt", "samples.csv", "publishers.csv",
                         "traces.csv", "report.csv", "summary.txt"):
                assert (run_dir / name).exists()
            assert len(digest) == 16

    def test_failing_run_recorded_and_sweep_continues(self, tmp_path, monkeypatch):
        real = runner_mod.run_benchmark

        def flaky(config, **kw):
            if config.node_count == 2:
                raise RunError("injected startup failure")
            return real(config, **kw)

        monkeypatch.setattr(runner_mod, "run_benchmark", flaky)
        rows = run_sweep(self._matrix(), tmp_path)
        statuses = {run_id: status for run_id, status, _ in rows}
        assert sum("failed" in s for s in statuses.values()) == 1
        assert sum(s == "ok" for s in statuses.values()) == 1

    def test_config_hash_stable(self):
        a, b = sim_config(), sim_config()
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(sim_config(seed=7))
