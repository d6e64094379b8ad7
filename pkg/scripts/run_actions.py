"""Scene-centric vs view-centric action accuracy, and accuracy by number of observing views."""
import argparse

import numpy as np

from crossview.experiments import ACTION, BREAKDOWN, ActionScores, action_scores, parse_scene, train_prior

WORKLOADS = {"action": ACTION, "breakdown": BREAKDOWN}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workload", choices=sorted(WORKLOADS), default="action")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    wl = WORKLOADS[args.workload]
    prior = train_prior(wl)
    pooled = ActionScores()
    for seed in range(args.seeds):
        s = action_scores(parse_scene(wl, seed, prior))
        pooled.extend(s)
        print(f"seed {seed:3d}  " + "  ".join(f"{k} {s.accuracy(k):.3f}" for k in ("scene", "view", "vote", "mean")),
              flush=True)
    print("pooled  " + "  ".join(f"{k} {pooled.accuracy(k):.3f}" for k in ("scene", "view", "vote", "mean")))
    nv = np.array(pooled.n_views)
    for k in sorted(set(nv.tolist())):
        print(f"{k} observing view(s): scene {pooled.accuracy('scene', nv == k):.3f}  (n={int((nv == k).sum())})")


if __name__ == "__main__":
    main()
