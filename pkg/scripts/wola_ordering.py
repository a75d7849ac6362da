"""Mean first-channel output SNR in the anechoic WOLA scenes.

Runs the global-only target scene and, with ``--with-local``, the scene
with one local desired source per node. Each run takes about a minute.

    python scripts/wola_ordering.py --seeds 0 1 --with-local
"""
import argparse
import csv
from dataclasses import replace
from pathlib import Path

from wasnsim.harness import load_spec, run

HERE = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--with-local", action="store_true")
    ap.add_argument("--duration", type=float, default=None)
    ap.add_argument("--out", type=Path, default=Path("results/wola_ordering.csv"))
    args = ap.parse_args()
    args.out.parent.mkdir(parents=True, exist_ok=True)

    scenes = ["wola_g"] + (["wola_gl"] if args.with_local else [])
    rows = []
    for name in scenes:
        for seed in args.seeds:
            spec = load_spec(HERE / f"{name}.json", seed=seed)
            if args.duration is not None:
                spec = replace(spec, duration_s=args.duration)
            rep = run(spec)
            snr = {a: rep.summary[a]["snr_db"] for a in rep.algorithms}
            print(name, seed, "  ".join(f"{a} {v:.2f}" for a, v in snr.items()))
            rows += [(name, seed, a, v) for a, v in snr.items()]

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scene", "seed", "algorithm", "snr_db"))
        w.writerows(rows)


if __name__ == "__main__":
    main()
