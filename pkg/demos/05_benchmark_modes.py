"""
Benchmark: what protection costs
================================

Per-event handling time in three modes: no boundary at all, boundary
marshalling without cryptography, and the full envelope pipeline. Desk
scale here (smaller than the shipped defaults) so it finishes in seconds;
`rulevault bench` runs the full sweep.
"""

import numpy as np

from rulevault.bench import BenchConfig, emit_report, run_bench
from rulevault.enclave import Mode

SIZES = [100, 400, 1000]
EVENTS = 2000

results = []
for size in SIZES:
    for mode in (Mode.PLAIN, Mode.TRUSTED_NO_ENC, Mode.FULL):
        result = run_bench(
            BenchConfig(mode=mode, ruleset_size=size, devices=32, events=EVENTS, seed=7)
        )
        results.append(result)
        print(
            f"{mode.value:>15} rules={size:<5} mean={result.mean_us:8.1f}us "
            f"p95={result.p95_us:8.1f}us hit_rate={result.hit_rate:.3f}"
        )

csv_text, table = emit_report(results)
print()
print(table)

# The ordering is the stable finding; absolute numbers track the host.
for size in SIZES:
    by_mode = {r.mode: r.mean_us for r in results if r.ruleset_size == size}
    assert by_mode[Mode.PLAIN] < by_mode[Mode.TRUSTED_NO_ENC] < by_mode[Mode.FULL]
print("ordering plain < trusted_no_enc < full holds at every size")

# Crypto cost per event, isolated from marshalling:
overhead = np.array(
    [
        by_mode[Mode.FULL] - by_mode[Mode.TRUSTED_NO_ENC]
        for size in SIZES
        for by_mode in [{r.mode: r.mean_us for r in results if r.ruleset_size == size}]
    ]
)
print(f"envelope crypto adds {overhead.mean():.1f}us per event on this host")
