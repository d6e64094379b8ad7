"""Cross-view identity F1 on the identity workload, one line per seed."""
import argparse

import numpy as np

from crossview.experiments import IDENTITY, identity_scores, parse_scene, train_prior


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    prior = train_prior(IDENTITY)
    f1s = []
    for seed in range(args.seeds):
        run = parse_scene(IDENTITY, seed, prior)
        p, r, f1 = identity_scores(run)
        f1s.append(f1)
        print(f"seed {seed:3d}  precision {p:.3f}  recall {r:.3f}  F1 {f1:.3f}  {run.seconds:.1f}s", flush=True)
    print(f"mean F1 {np.mean(f1s):.3f}")


if __name__ == "__main__":
    main()
