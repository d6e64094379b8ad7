"""Compare MH visit frequencies with the enumerated structure posterior."""
import argparse

import numpy as np

from crossview.experiments import stationary_instance
from crossview.sampler import Chain, SamplerConfig
from crossview.scoring import EntityScorer
from crossview.simulator import structure_space


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    p = stationary_instance()
    scorer = EntityScorer(p)
    space = list(structure_space(p))
    lps = np.array([scorer.total(s) for s in space])
    post = np.exp(lps - lps.max())
    post /= post.sum()
    start = frozenset(frozenset([k]) for k in p.tracklets)
    res = Chain(p, start, SamplerConfig(iterations=args.iters, seed=args.seed, record_states=True), scorer).run()
    freq = np.array([res.visits[s] for s in space], float) / res.iterations
    for s, q, f in zip(space, post, freq):
        blocks = " | ".join(",".join(f"{c}:{v}" for c, v in sorted(b)) for b in sorted(s, key=min))
        print(f"{q:.4f}  {f:.4f}  {blocks}")
    print(f"total variation {0.5 * np.abs(freq - post).sum():.4f}, acceptance {res.accepted / res.iterations:.3f}")


if __name__ == "__main__":
    main()
