"""Rank of every planted anomaly on the four synthetic kinds.

    python3 scripts/typology.py --seeds 10
"""

import argparse

import numpy as np

from secoda import GeneratorSpec, detect, generate
from secoda.synth import TABLE_SIZES


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    print("kind,seed,case_id,type,aas,rank,iterations")
    worst = {}
    for kind in sorted(TABLE_SIZES):
        for seed in range(args.seeds):
            lab = generate(GeneratorSpec(kind, seed=seed))
            res = detect(lab.data)
            ranks = res.ranks
            for g in np.flatnonzero(lab.is_anomaly):
                t = lab.labels[g]
                print(f"{kind},{seed},{g},{t},{res.scores[g]:.6g},{ranks[g]},{res.iterations_run}")
                worst[kind, t] = max(worst.get((kind, t), 0), int(ranks[g]))
    print()
    for (kind, t), r in sorted(worst.items()):
        print(f"# {kind:10s} Type {t:3s} worst rank {r}")


if __name__ == "__main__":
    main()
