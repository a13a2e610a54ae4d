#!/usr/bin/env python3
"""Emit the closed-form transmission and complexity-reduction tables for both
network geometries (no audio processing involved)."""

import sys
from pathlib import Path

from dwpe import complexity, netsim


def main() -> int:
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/tables")
    outdir.mkdir(parents=True, exist_ok=True)
    setups = [
        ("simulated", 26, [6, 9, 12]),
        ("real", 40, [4, 6, 8]),
    ]
    for name, filter_order, node_counts in setups:
        print(f"--- {name} geometry (L={filter_order}) ---")
        for m in node_counts:
            t_cent = netsim.count_transmissions("centralized", m, filter_order)
            t_dist = netsim.count_transmissions("distributed", m)
            beta = complexity.beta_report(m, filter_order)
            print(
                f"M={m:2d}: T cent/dist = {t_cent:3d}/{t_dist:2d} "
                f"(saving {100 * netsim.transmission_reduction(m, filter_order):.2f}%)  "
                f"dim dist = {complexity.distributed_filter_dimension(m, filter_order)}  "
                f"beta mul/div/solve = {beta.beta_mul:.3f}/{beta.beta_div:.3f}/{beta.beta_solve:.4f}"
            )
        complexity.beta_table_csv(
            outdir / f"betas_{name}.csv", filter_order, node_counts, scenario=name
        )
    print(f"CSV tables in {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
