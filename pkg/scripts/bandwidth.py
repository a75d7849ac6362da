"""Channels broadcast per node until each algorithm is within delta of optimal.

    python scripts/bandwidth.py --delta-db 0.5
"""
import argparse
from pathlib import Path

from wasnsim.harness import compare_bandwidth, load_spec

HERE = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--delta-db", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    spec = load_spec(HERE / "desk_true.json", seed=args.seed)
    print(f"{'algorithm':14s} {'J':>2s} {'ch/cycle':>9s} {'cycles':>7s} {'total':>6s}")
    for r in compare_bandwidth(spec, delta_db=args.delta_db):
        cyc = "never" if r["cycles"] is None else r["cycles"]
        tot = "-" if r["total_channels"] is None else r["total_channels"]
        print(f"{r['algorithm']:14s} {r['J']:2d} {r['channels_per_cycle']:9} {cyc!s:>7s} {tot!s:>6s}")


if __name__ == "__main__":
    main()
