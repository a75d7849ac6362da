"""MSE_d versus frame index on the desk-scale scene, true and online SCMs.

    python scripts/convergence.py --out-dir results --seed 0
"""
import argparse
from pathlib import Path

import numpy as np

from wasnsim.harness import load_spec, run

HERE = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--frames", type=int, default=None)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    for name in ("desk_true", "desk_online"):
        spec = load_spec(HERE / f"{name}.json", seed=args.seed, n_frames=args.frames)
        rep = run(spec)
        rep.to_csv(args.out_dir / spec.output)
        print(f"{name}: final MSE_d in dB (last 50 frames averaged)")
        for alg in rep.algorithms:
            m = np.mean(rep.traces[alg].mse_d[-50:])
            print(f"  {alg:14s} {10 * np.log10(m):7.2f}")


if __name__ == "__main__":
    main()
