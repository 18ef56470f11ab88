"""Rate versus sensing tradeoff on the shipped scenario.

Runs the rate-target sweep for every scheme and prints the human-readable
table.  Expect the proposed design to sit between the sensing-only scheme
(the floor) and the two benchmarks, with a dedicated sensing beam appearing
only at moderate rate targets.

    python demos/tradeoff_sweep.py [points]
"""
import sys

from isac_pcrb.config import config_from_dict
from isac_pcrb.sweep import check_invariants, run_sweep, to_human


def main(points: int = 8) -> None:
    cfg = config_from_dict({"sweep": {"points": points}})
    print(f"MRT capacity {cfg.scenario.mrt_capacity:.4f} bps/Hz, {points} rate targets\n")
    rows = run_sweep(cfg)
    print(to_human(rows))
    problems = check_invariants(rows)
    print("invariants:", "all hold" if not problems else "; ".join(problems))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 8)
