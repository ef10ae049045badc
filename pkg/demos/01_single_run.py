"""A first benchmark run.

One publisher sends 16-byte messages to one subscriber at 10 Hz for six
seconds over the deterministic simulated channel.  We inspect the raw
samples, the publisher's schedule accounting, and the latency statistics.
"""

from pubbench import latency_stats, run_benchmark, validate_config

config = validate_config({
    "node_count": 2,
    "topology_kind": "PAIRED",
    "payload_bytes": 16,
    "frequency_hz": 10,
    "duration_s": 6,
    "backend": "SIM",
    "seed": 42,
})
print(f"run id: {config.run_id}")
print(f"schedule: {config.frequency_hz} Hz for {config.duration_s} s "
      f"-> {config.frequency_hz * int(config.duration_s)} messages\n")

artifacts = run_benchmark(config)

print(f"publisher records: {len(artifacts.publisher_records)}")
print(f"samples:           {len(artifacts.samples)}")
print(f"trace events:      {len(artifacts.traces)} "
      f"(11 stage stamps per delivered message)\n")

first = artifacts.samples[0]
print("first delivery:")
print(f"  seq {first.seq}: published at {first.publish_ts_ns} ns, "
      f"received at {first.receive_ts_ns} ns")
print(f"  latency {first.latency_ns / 1e6:.3f} ms -> {first.status.value}\n")

stats = latency_stats([s.latency_ns for s in artifacts.samples])
print(f"latency over the run: mean {stats.mean_ns / 1e6:.3f} ms, "
      f"median {stats.median_ns / 1e6:.3f} ms, "
      f"IQR [{stats.q1_ns / 1e6:.3f}, {stats.q3_ns / 1e6:.3f}] ms")
print("every run with this seed reproduces these numbers bit for bit.")
