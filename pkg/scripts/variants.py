"""ROC/PR AUC of the detector variants on labeled synthetic data, with a
paired partial-AUC difference test against the final variant.

    python3 scripts/variants.py --kind noisymix --seeds 10 --resamples 2000
"""

import argparse

from secoda import DetectionConfig, GeneratorSpec, detect, generate
from secoda.metrics import ScoredLabels, pauc_diff_test, pr_auc, roc_auc
from secoda.synth import TABLE_SIZES

VARIANTS = ("final", "pruneless", "stepless", "unweighted")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", choices=sorted(TABLE_SIZES), default="noisymix")
    ap.add_argument("--n", type=int, default=None)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--resamples", type=int, default=2000)
    args = ap.parse_args()
    print("seed,variant,roc_auc,pr_auc,iterations,p_pauc_vs_final")
    for seed in range(args.seeds):
        lab = generate(GeneratorSpec(args.kind, args.n, seed))
        sls = {}
        for v in VARIANTS:
            res = detect(lab.data, DetectionConfig.variant(v))
            sls[v] = (ScoredLabels(res.scores, lab.is_anomaly), res.iterations_run)
        for v, (sl, iters) in sls.items():
            p = 1.0 if v == "final" else pauc_diff_test(sls["final"][0], sl, resamples=args.resamples, seed=seed)
            print(f"{seed},{v},{roc_auc(sl)[1]:.6f},{pr_auc(sl)[1]:.6f},{iters},{p:.4g}")


if __name__ == "__main__":
    main()
