#!/usr/bin/env python3
"""Use case 2: end-to-end latency against block size.

Two CO2 sensors report every 10 s. Each reading is timed from generation
to the confirmation arriving back at the UE, for b = 10, 30, 50, 100 and
for conventional NB-IoT where the server simply ACKs. A text
histogram of the b = 100 latencies is printed at the end.

    python demos/block_size_latency.py [n_seeds]
"""

import sys

import numpy as np

from nbiotdlt import ScenarioConfig
from nbiotdlt.experiments import fig6_table, run_usecase2


def main(n_seeds=3):
    outs = run_usecase2(ScenarioConfig(profile="fig6", n_ues=2), seeds=range(n_seeds))
    table = fig6_table(outs)
    print(f"E2E latency, 2 UEs, {n_seeds} seed(s)\n")
    print("point        mean_s   p95_s")
    for b in (10, 30, 50, 100, 0):
        mean, p95 = table[b]
        name = "NB-IoT" if b == 0 else f"DLT b={b}"
        print(f"{name:<12} {mean:<8.3f} {p95:.3f}")

    # latencies of the first b = 100 run, straight from its per-tx CSV
    b100 = next(o for o in outs if o.label.endswith("_b100"))
    rows = [line.split(",") for line in b100.per_tx_csv.splitlines()[1:]]
    lat = np.array([(int(r[4]) - int(r[2])) / 1e6 for r in rows if r[4]])
    counts, edges = np.histogram(lat, bins=10)
    print(f"\nb=100, seed {b100.seed}: {lat.size} confirmed readings")
    for c, lo, hi in zip(counts, edges, edges[1:]):
        print(f"  {lo:6.3f}-{hi:6.3f} s {c:>5} {'#' * int(50 * c / counts.max())}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
