#!/usr/bin/env python3
"""Use case 1: UL/DL data traffic ratio against payload size and E.

Runs the 4 x 4 DLT grid plus the conventional NB-IoT series with the fig5
profile and prints it as a table. With DLT the ratio stays below 1: every
reading pulls E endorsement responses and a confirmation down the link.
Without it the only DL data is a small application ACK.

    python demos/payload_sweep.py [n_seeds]
"""

import sys
import time

from nbiotdlt import ScenarioConfig
from nbiotdlt.experiments import (USECASE1_ENDORSEMENTS, USECASE1_PAYLOADS, fig5_table,
                                  run_usecase1)


def main(n_seeds=2):
    t0 = time.perf_counter()
    outs = run_usecase1(ScenarioConfig(profile="fig5"), seeds=range(n_seeds))
    table = fig5_table(outs)

    print(f"mean UL/DL ratio per transaction, {n_seeds} seed(s), 1000 tx per point\n")
    print("series      " + "".join(f"P={p:<6}" for p in USECASE1_PAYLOADS))
    for e in USECASE1_ENDORSEMENTS:
        print(f"DLT E={e}     " + "".join(f"{table[(p, e)]:<8.3f}" for p in USECASE1_PAYLOADS))
    print("NB-IoT      " + "".join(f"{table[(p, 0)]:<8.3f}" for p in USECASE1_PAYLOADS))

    print(f"\nat P=50 B, E=2 the DL carries {1 / table[(50, 2)]:.2f}x the UL data")
    print(f"{len(outs)} runs in {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2)
