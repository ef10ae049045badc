"""Where does the time go, and what happens past the limit?

Per-layer trace stamps let us attribute each message's publisher-side
span to adjacent stage pairs.  Serialization (a genuine byte-copy whose
simulated cost is calibrated per byte) dominates for large payloads, and
once one message costs more than the publishing period, the schedule
falls behind: ticks run back-to-back, messages go out late, and the
window closes with part of the schedule unsent.
"""

from pubbench import run_benchmark, validate_config
from pubbench.analysis import layer_breakdown
from pubbench.stack import SendStatus

PER_BYTE_NS = 8.0  # calibrated so one 2 MiB serialize exceeds the 10 ms period


def breakdown_for(payload_bytes):
    config = validate_config({
        "node_count": 2, "topology_kind": "PAIRED",
        "payload_bytes": payload_bytes, "frequency_hz": 10, "duration_s": 3,
        "backend": "SIM", "seed": 2, "discovery_wait_ms": 10,
        "sim_serialize_ns_per_byte": PER_BYTE_NS,
    })
    return layer_breakdown(run_benchmark(config).traces)


print("publisher-side share per stage pair (10 Hz, 1-1):\n")
for payload in (0, 65_536, 2 * 1024 * 1024):
    result = breakdown_for(payload)
    print(f"payload {payload:>9} B, publisher span "
          f"{result.publisher_span_mean_ns / 1e6:9.3f} ms")
    for name, pair in result.pairs.items():
        if name.split('->')[0] in ("APP_PUBLISH", "CLIENT_PUBLISH",
                                   "ADAPTER_PUBLISH", "SERIALIZE_BEGIN",
                                   "SERIALIZE_END"):
            print(f"    {name:<36} {pair.share_of_total:7.1%}")
    print()

print("now 100 Hz with 2 MiB messages: one publish costs ~17 ms against a")
print("10 ms period, so the publisher cannot keep up:\n")
overloaded = validate_config({
    "node_count": 2, "topology_kind": "PAIRED",
    "payload_bytes": 2 * 1024 * 1024, "frequency_hz": 100, "duration_s": 6,
    "backend": "SIM", "seed": 2, "discovery_wait_ms": 10,
    "sim_serialize_ns_per_byte": PER_BYTE_NS,
})
records = run_benchmark(overloaded).publisher_records
by_status = {status: sum(1 for r in records if r.send_status == status)
             for status in SendStatus}
print(f"scheduled {len(records)}: " + ", ".join(
    f"{status.value} {count}" for status, count in by_status.items()))
print("\nthe sent messages form a gap-free prefix of the schedule; the rest")
print("never left the application before the measurement window closed.")
