"""
WAN emulation and the benchmark harness
=======================================

A link shaper queues virtual transmissions at a configured bandwidth
and tacks propagation delay on top, so a loopback socket behaves like a
long-haul link. The scenario runner turns that into CSV artifacts.
"""

import tempfile

from pilotedge.netem import LinkShaper, LinkSpec
from pilotedge.pilots import Tier
from pilotedge.scenarios import Scenario, run_scenario

# 2,560,000-byte transfers through 80 Mbit/s + 150 ms: the arithmetic
# says 0.256 s of serialization plus the propagation delay
spec = LinkSpec(delay_ms=150.0, bandwidth_mbit=80.0, applies_to=("edge", "cloud"))
shaper = LinkShaper(spec)
first = shaper.shape_transfer(2_560_000, now=0.0)
print(f"one 2.56 MB transfer delivers after {first:.3f} s")

# back-to-back transfers queue behind each other; no idle credit is banked
second = shaper.shape_transfer(2_560_000, now=0.0)
print(f"a second queued transfer delivers after {second:.3f} s")

# now the same link under a real run: TCP transport, one partition,
# four 10,000-point messages
with tempfile.TemporaryDirectory() as out_dir:
    scenario = Scenario(
        name="baseline",
        transport="tcp",
        wan=LinkSpec(150.0, 80.0, (Tier.EDGE.value, Tier.CLOUD.value)),
        partitions=1,
        points_per_message=10_000,
        messages=4,
        repeats=1,
        out_dir=out_dir,
    )
    result = run_scenario(scenario)
    report = result.outcomes[0].report
    print(f"run ok={result.ok}: p50 {report.latency_ms['p50']:.0f} ms, "
          f"throughput {report.throughput_mb_s:.2f} MB/s")
    print(f"artifacts: {result.summary_path}")
