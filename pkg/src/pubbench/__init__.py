"""pubbench: an instrumented publish/subscribe latency benchmark.

A reference transport (deterministic simulation or real UDP loopback)
under a four-layer pub/sub stack, with per-layer trace instrumentation,
a sweep harness, and the statistics to analyze the results.
"""

__version__ = "0.1.0"

from .analysis import (
    CategoryCounts,
    FairnessReport,
    LatencyStats,
    LayerBreakdown,
    categorize,
    fairness,
    latency_stats,
    layer_breakdown,
    loss_rate,
    pair_loss_rates,
    timeline,
)
from .model import (
    Backend,
    BenchmarkConfig,
    ConfigError,
    NodeRole,
    Reliability,
    SweepMatrix,
    TopologyKind,
    TopologySpec,
    build_topology,
    expand_sweep,
    expected_message_count,
    load_config,
    validate_config,
)
from .runner import RunArtifacts, RunError, persist_run, run_benchmark, run_sweep
from .stack import (
    PublisherRecord,
    SampleRecord,
    SampleStatus,
    SendStatus,
    Stage,
    TraceEvent,
)
from .transport import (
    FeedResult,
    NackRecord,
    ReassemblyBuffer,
    WireFormatError,
    WirePacket,
    decode_packet,
    encode_packet,
    fragment_payload,
)
