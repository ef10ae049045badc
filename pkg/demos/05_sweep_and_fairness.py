"""A parameter sweep, and how fairly a fan-out topology treats its
subscribers.

The sweep harness expands a small matrix (every topology shape at two
node counts and two payload sizes), runs each config sequentially, and
persists per-run CSV artifacts plus an index.  Afterwards we look at the
per-subscriber latency spread of a 1-to-15 run.
"""

import tempfile
from pathlib import Path

from pubbench import SweepMatrix, TopologyKind, fairness, run_benchmark, run_sweep
from pubbench.model import validate_config

matrix = SweepMatrix(
    node_counts=(2, 8),
    topology_kinds=tuple(TopologyKind),
    payload_bytes=(16, 65_536),
    frequencies_hz=(10,),
    fixed={"duration_s": 1, "backend": "SIM", "seed": 11, "discovery_wait_ms": 10},
)

out_dir = Path(tempfile.mkdtemp(prefix="pubbench-demo-"))
rows = run_sweep(matrix, out_dir)
print(f"swept {len(rows)} configs into {out_dir}:")
for run_id, status, digest in rows:
    print(f"  {status:<3} {run_id} ({digest})")
print("\neach run directory holds config.txt, samples.csv, publishers.csv,")
print("traces.csv, report.csv, and summary.txt; index.csv lists them all.\n")

fan_out = validate_config({
    "node_count": 16, "topology_kind": "ONE_TO_MANY",
    "payload_bytes": 65_536, "frequency_hz": 10, "duration_s": 6,
    "backend": "SIM", "seed": 11, "discovery_wait_ms": 10,
})
report = fairness(run_benchmark(fan_out).samples)
print(f"fan-out fairness over {len(report.per_subscriber_mean_ns)} subscribers:")
for sub, mean in report.per_subscriber_mean_ns.items():
    print(f"  subscriber {sub:>2}: mean {mean / 1e6:.3f} ms")
print(f"spread {report.spread_ns / 1e6:.3f} ms, staircase pattern: {report.staircase}")
