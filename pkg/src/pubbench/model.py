"""Benchmark configuration, topology construction, and sweep expansion.

Everything in this module is a pure function over immutable values.  A
``BenchmarkConfig`` describes one fully-resolved run; a ``SweepMatrix``
describes a family of runs expanded into an ordered, duplicate-free list
of configs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields
from decimal import Decimal
from enum import Enum
from typing import Mapping, Sequence


class ConfigError(ValueError):
    """Raised for any malformed or constraint-violating configuration."""


class TopologyKind(str, Enum):
    PAIRED = "PAIRED"
    ONE_TO_MANY = "ONE_TO_MANY"
    MANY_TO_ONE = "MANY_TO_ONE"


class Backend(str, Enum):
    SIM = "SIM"
    UDP = "UDP"


class Reliability(str, Enum):
    BEST_EFFORT = "BEST_EFFORT"
    RELIABLE = "RELIABLE"


class NodeRole(str, Enum):
    PUBLISHER = "PUBLISHER"
    SUBSCRIBER = "SUBSCRIBER"


# Largest fragment payload that still fits a single UDP datagram (65507
# bytes) together with the fixed wire header.  The simulated channel has
# no datagram limit and additionally accepts the full 64 KiB step.
MAX_FRAGMENT_PAYLOAD_UDP = 65000
MAX_FRAGMENT_PAYLOAD_SIM = 65536


@dataclass(frozen=True)
class BenchmarkConfig:
    """One fully-resolved benchmark run.

    ``sim_*`` fields and ``loss_prob`` drive the simulated backend only;
    ``udp_socket_buffer_bytes`` drives the UDP backend only.  Setting a
    backend-specific key for the other backend is a validation error, so
    that a misconfigured run fails loudly instead of silently measuring
    the wrong thing.
    """

    node_count: int
    topology_kind: TopologyKind
    payload_bytes: int
    frequency_hz: int
    duration_s: float
    backend: Backend = Backend.SIM
    reliability: Reliability = Reliability.BEST_EFFORT
    run_id: str = ""
    fragment_payload_bytes: int = MAX_FRAGMENT_PAYLOAD_UDP
    seed: int = 0
    discovery_wait_ms: int = 1000
    drain_ms: int = 500
    loss_prob: float = 0.0
    sim_delay_ns: int = 0
    max_repair_rounds: int = 10
    repair_interval_ms: float = 5.0
    # Simulated execution cost model: fixed cost per stage hop, per-byte
    # serialization cost, and per-fragment wire handling cost.
    sim_stage_cost_ns: int = 2000
    sim_serialize_ns_per_byte: float = 1.0
    sim_frag_ns: int = 1000
    # Publisher k starts its schedule at t0 + k * phase_offset_ns.
    phase_offset_ns: int = 0
    udp_socket_buffer_bytes: int = 4 * 1024 * 1024

    @property
    def period_ns(self) -> int:
        return round(1_000_000_000 / self.frequency_hz)

    @property
    def duration_ns(self) -> int:
        return int(Decimal(repr(self.duration_s)) * 1_000_000_000)


_REQUIRED = ("node_count", "topology_kind", "payload_bytes", "frequency_hz", "duration_s")

_INT_FIELDS = {
    "node_count", "payload_bytes", "frequency_hz", "fragment_payload_bytes",
    "seed", "discovery_wait_ms", "drain_ms", "sim_delay_ns", "max_repair_rounds",
    "sim_stage_cost_ns", "sim_frag_ns", "phase_offset_ns", "udp_socket_buffer_bytes",
}
_FLOAT_FIELDS = {"duration_s", "loss_prob", "repair_interval_ms", "sim_serialize_ns_per_byte"}
_ENUM_FIELDS = {"topology_kind": TopologyKind, "backend": Backend, "reliability": Reliability}

# Keys that are only meaningful for one backend.
_SIM_ONLY = ("loss_prob", "sim_delay_ns", "sim_stage_cost_ns",
             "sim_serialize_ns_per_byte", "sim_frag_ns")
_UDP_ONLY = ("udp_socket_buffer_bytes",)

_ALL_KEYS = {f.name for f in dc_fields(BenchmarkConfig)}


def _coerce_int(key: str, value: object) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected an integer, got a boolean")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value != int(value):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    try:
        return int(str(value).strip(), 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _coerce_float(key: str, value: object) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(str(value).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _coerce_enum(key: str, value: object, enum_cls: type[Enum]) -> Enum:
    if isinstance(value, enum_cls):
        return value
    token = str(value).strip().upper().replace("-", "_")
    try:
        return enum_cls[token]
    except KeyError:
        allowed = ", ".join(m.name for m in enum_cls)
        raise ConfigError(f"{key}: {value!r} is not one of {allowed}") from None


def default_run_id(cfg: BenchmarkConfig) -> str:
    """Deterministic label derived from the distinguishing config fields."""
    return (
        f"{cfg.backend.value.lower()}-n{cfg.node_count}"
        f"-{cfg.topology_kind.value.lower()}-{cfg.payload_bytes}b"
        f"-{cfg.frequency_hz}hz-{cfg.reliability.value.lower()}-seed{cfg.seed}"
    )


def validate_config(raw: Mapping[str, object]) -> BenchmarkConfig:
    """Build a fully-defaulted BenchmarkConfig from parsed key/value pairs.

    Raises ConfigError naming the first violated constraint.  Unknown keys
    are hard errors.
    """
    for key in raw:
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required config key {key!r}")

    values: dict[str, object] = {}
    for key, value in raw.items():
        if key in _INT_FIELDS:
            values[key] = _coerce_int(key, value)
        elif key in _FLOAT_FIELDS:
            values[key] = _coerce_float(key, value)
        elif key in _ENUM_FIELDS:
            values[key] = _coerce_enum(key, value, _ENUM_FIELDS[key])
        else:  # run_id
            values[key] = str(value)

    backend = values.get("backend", Backend.SIM)
    if backend == Backend.UDP:
        for key in _SIM_ONLY:
            if key in values:
                raise ConfigError(
                    f"{key} is SIM-only (loss injection and the simulated cost "
                    f"model do not apply to the UDP backend)")
    else:
        for key in _UDP_ONLY:
            if key in values:
                raise ConfigError(f"{key} is UDP-only")

    cfg = BenchmarkConfig(**values)  # type: ignore[arg-type]

    if cfg.node_count < 2:
        raise ConfigError("node_count must be at least 2")
    if cfg.node_count > 0xFFFF:
        raise ConfigError("node_count must fit 16 bits")
    if cfg.topology_kind == TopologyKind.PAIRED and cfg.node_count % 2 != 0:
        raise ConfigError("PAIRED requires even node_count")
    if cfg.payload_bytes < 0:
        raise ConfigError("payload_bytes must be non-negative")
    if cfg.frequency_hz <= 0:
        raise ConfigError("frequency_hz must be positive")
    if cfg.duration_s <= 0:
        raise ConfigError("duration_s must be positive")
    frag_cap = (MAX_FRAGMENT_PAYLOAD_UDP if cfg.backend == Backend.UDP
                else MAX_FRAGMENT_PAYLOAD_SIM)
    if not (1 <= cfg.fragment_payload_bytes <= frag_cap):
        raise ConfigError(
            f"fragment_payload_bytes must be in [1, {frag_cap}] for the "
            f"{cfg.backend.value} backend (UDP fragments must fit one "
            f"datagram with the framing header)")
    if cfg.seed < 0 or cfg.seed > 0xFFFFFFFFFFFFFFFF:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.discovery_wait_ms < 0:
        raise ConfigError("discovery_wait_ms must be non-negative")
    if cfg.drain_ms < 0:
        raise ConfigError("drain_ms must be non-negative")
    if not (0.0 <= cfg.loss_prob <= 1.0):
        raise ConfigError("loss_prob must be in [0, 1]")
    if cfg.sim_delay_ns < 0:
        raise ConfigError("sim_delay_ns must be non-negative")
    if cfg.max_repair_rounds <= 0:
        raise ConfigError("max_repair_rounds must be positive")
    if cfg.repair_interval_ms <= 0:
        raise ConfigError("repair_interval_ms must be positive")
    if cfg.sim_stage_cost_ns < 0 or cfg.sim_frag_ns < 0:
        raise ConfigError("simulated stage costs must be non-negative")
    if cfg.sim_serialize_ns_per_byte < 0:
        raise ConfigError("sim_serialize_ns_per_byte must be non-negative")
    if cfg.phase_offset_ns < 0:
        raise ConfigError("phase_offset_ns must be non-negative")
    if cfg.udp_socket_buffer_bytes <= 0:
        raise ConfigError("udp_socket_buffer_bytes must be positive")

    if not cfg.run_id:
        cfg = BenchmarkConfig(**{**values, "run_id": default_run_id(cfg)})  # type: ignore[arg-type]
    return cfg


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the flat ``key = value`` config document.

    One assignment per line; blank lines and ``#`` comments are ignored.
    """
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_config(path) -> BenchmarkConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return validate_config(parse_config_text(fh.read()))


def config_text(cfg: BenchmarkConfig) -> str:
    """Canonical ``key = value`` serialization, reparseable by validate_config."""
    lines = []
    for f in dc_fields(BenchmarkConfig):
        if cfg.backend == Backend.UDP and f.name in _SIM_ONLY:
            continue
        if cfg.backend == Backend.SIM and f.name in _UDP_ONLY:
            continue
        value = getattr(cfg, f.name)
        if isinstance(value, Enum):
            value = value.value
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Topology construction


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    role: NodeRole
    topic_ids: tuple[int, ...]


@dataclass(frozen=True)
class TopicSpec:
    topic_id: int
    publisher_node: int
    subscriber_nodes: tuple[int, ...]


@dataclass(frozen=True)
class TopologySpec:
    nodes: tuple[NodeSpec, ...]
    topics: tuple[TopicSpec, ...]

    @property
    def publisher_nodes(self) -> tuple[NodeSpec, ...]:
        return tuple(n for n in self.nodes if n.role == NodeRole.PUBLISHER)

    @property
    def subscriber_nodes(self) -> tuple[NodeSpec, ...]:
        return tuple(n for n in self.nodes if n.role == NodeRole.SUBSCRIBER)


def build_topology(node_count: int, kind: TopologyKind) -> TopologySpec:
    """Construct one of the three benchmark graph shapes.

    Node and topic ids are dense integers assigned deterministically:
    publishers first, subscribers after, topics in publisher order.
    """
    if node_count < 2:
        raise ConfigError("node_count must be at least 2")

    nodes: list[NodeSpec] = []
    topics: list[TopicSpec] = []

    if kind == TopologyKind.PAIRED:
        if node_count % 2 != 0:
            raise ConfigError("PAIRED requires even node_count")
        half = node_count // 2
        for i in range(half):
            nodes.append(NodeSpec(i, NodeRole.PUBLISHER, (i,)))
            topics.append(TopicSpec(i, publisher_node=i, subscriber_nodes=(half + i,)))
        for i in range(half):
            nodes.append(NodeSpec(half + i, NodeRole.SUBSCRIBER, (i,)))
    elif kind == TopologyKind.ONE_TO_MANY:
        subs = tuple(range(1, node_count))
        nodes.append(NodeSpec(0, NodeRole.PUBLISHER, (0,)))
        topics.append(TopicSpec(0, publisher_node=0, subscriber_nodes=subs))
        for i in subs:
            nodes.append(NodeSpec(i, NodeRole.SUBSCRIBER, (0,)))
    elif kind == TopologyKind.MANY_TO_ONE:
        sink = node_count - 1
        for i in range(sink):
            nodes.append(NodeSpec(i, NodeRole.PUBLISHER, (i,)))
            topics.append(TopicSpec(i, publisher_node=i, subscriber_nodes=(sink,)))
        nodes.append(NodeSpec(sink, NodeRole.SUBSCRIBER, tuple(range(sink))))
    else:  # pragma: no cover - enum is closed
        raise ConfigError(f"unknown topology kind {kind!r}")

    return TopologySpec(nodes=tuple(nodes), topics=tuple(topics))


# --------------------------------------------------------------------------
# Sweep expansion


@dataclass(frozen=True)
class SweepMatrix:
    """Dimension lists plus fixed fields shared by all expanded configs."""

    node_counts: tuple[int, ...]
    topology_kinds: tuple[TopologyKind, ...]
    payload_bytes: tuple[int, ...]
    frequencies_hz: tuple[int, ...]
    fixed: dict = field(default_factory=dict)


_MATRIX_DIMENSIONS = ("node_counts", "topology_kinds", "payload_bytes", "frequencies_hz")
# Matrix files use the config key names; the plural dimension keys map onto them.
_DIMENSION_CONFIG_KEY = {
    "node_counts": "node_count",
    "topology_kinds": "topology_kind",
    "payload_bytes": "payload_bytes",
    "frequencies_hz": "frequency_hz",
}

_KIND_ORDER = {k: i for i, k in enumerate(TopologyKind)}


def expand_sweep(matrix: SweepMatrix) -> list[BenchmarkConfig]:
    """Cartesian product of the sweep dimensions, in deterministic order.

    Ordered by (node_count, topology kind, payload size, frequency).  With
    node_count=2 all three topology kinds coincide at one publisher and one
    subscriber, so only a single config (canonically PAIRED) is kept.
    """
    for dim in _MATRIX_DIMENSIONS:
        if not getattr(matrix, dim):
            raise ConfigError(f"sweep dimension {dim} is empty")

    node_counts = sorted(set(matrix.node_counts))
    kinds = sorted(set(matrix.topology_kinds), key=_KIND_ORDER.__getitem__)
    sizes = sorted(set(matrix.payload_bytes))
    freqs = sorted(set(matrix.frequencies_hz))

    configs: list[BenchmarkConfig] = []
    for n in node_counts:
        effective_kinds = [TopologyKind.PAIRED] if n == 2 else kinds
        for kind in effective_kinds:
            for size in sizes:
                for freq in freqs:
                    raw = dict(matrix.fixed)
                    raw.update(node_count=n, topology_kind=kind,
                               payload_bytes=size, frequency_hz=freq)
                    configs.append(validate_config(raw))
    return configs


def parse_matrix_text(text: str) -> SweepMatrix:
    """Parse a sweep matrix document: config keys with comma-separated lists
    for the four swept dimensions, single values for everything else."""
    raw = parse_config_text(text)
    dims: dict[str, tuple] = {}
    for dim, key in _DIMENSION_CONFIG_KEY.items():
        if key not in raw:
            raise ConfigError(f"missing swept key {key!r}")
        tokens = [t.strip() for t in raw.pop(key).split(",") if t.strip()]
        if not tokens:
            raise ConfigError(f"sweep dimension {key} is empty")
        if dim == "topology_kinds":
            dims[dim] = tuple(_coerce_enum(key, t, TopologyKind) for t in tokens)
        else:
            dims[dim] = tuple(_coerce_int(key, t) for t in tokens)
    for key in raw:
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    return SweepMatrix(fixed=dict(raw), **dims)  # type: ignore[arg-type]


def expected_message_count(cfg: BenchmarkConfig) -> int:
    """Scheduled messages per publisher: floor(frequency_hz * duration_s).

    Computed in decimal so that e.g. 10 Hz x 0.6 s counts 6 messages rather
    than tripping over binary float representation.
    """
    return int(math.floor(Decimal(cfg.frequency_hz) * Decimal(repr(cfg.duration_s))))


# --------------------------------------------------------------------------
# Built-in parameter matrices

# Comparative matrix: 1-1 and 1-31 at 16 B / 64 KiB / 1 MiB, 10 Hz, 60 s.
# Detailed matrix: 2/8/32/64 nodes across all three shapes, five sizes from
# empty to 2 MiB, at 10 and 100 Hz, 60 s.

def preset_table1(**fixed) -> SweepMatrix:
    base = {"duration_s": 60, "backend": "SIM"}
    base.update(fixed)
    return SweepMatrix(
        node_counts=(2, 32),
        topology_kinds=(TopologyKind.ONE_TO_MANY,),
        payload_bytes=(16, 65536, 1048576),
        frequencies_hz=(10,),
        fixed=base,
    )


def preset_table2(**fixed) -> SweepMatrix:
    base = {"duration_s": 60, "backend": "SIM"}
    base.update(fixed)
    return SweepMatrix(
        node_counts=(2, 8, 32, 64),
        topology_kinds=tuple(TopologyKind),
        payload_bytes=(0, 65536, 524288, 1048576, 2097152),
        frequencies_hz=(10, 100),
        fixed=base,
    )


PRESETS = {"table1": preset_table1, "table2": preset_table2}
