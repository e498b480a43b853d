"""Regenerate tests/golden/oracles.json from the independent oracles in tests/oracles.py.

Run from the repository root: ``python3 scripts/freeze_oracles.py``.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import oracles  # noqa: E402

ANOM, NORM = [1.0, 2.0], [2.0, 9.0]
PR_SCORES, PR_LABELS = [1.0, 2.0, 3.0, 4.0], [True, False, True, False]
PAUC_FPR, PAUC_TPR = [0.0, 0.05, 0.1, 1.0], [0.0, 0.8, 0.9, 1.0]


def build() -> dict:
    sched = oracles.hand_schedule(14)
    stepless = oracles.hand_schedule(14, accelerated=False)
    youden = oracles.exhaustive_best_threshold(ANOM + NORM, [True, True, False, False], "youden")
    mcc = oracles.exhaustive_best_threshold(ANOM + NORM, [True, True, False, False], "mcc")
    return {
        "schedule": {
            "b_used": [b for b, _ in sched],
            "s_after": [str(s) for _, s in sched],
            "stepless_b_used": [b for b, _ in stepless],
        },
        "cf_keys_example": {"keys": ["K1", "K1", "K2"], "cf": oracles.brute_force_cf(["K1", "K1", "K2"])},
        "weighted_8_4_2": oracles.recurrence_scores([8, 4, 2]),
        "auc_pairs": {"anom": [1, 3], "norm": [2, 4], "auc": float(oracles.pair_count_auc([1, 3], [2, 4]))},
        "pauc_riemann": {
            "fpr": PAUC_FPR,
            "tpr": PAUC_TPR,
            "value": oracles.riemann_partial_auc(PAUC_FPR, PAUC_TPR, 0.0, 0.1),
        },
        "pr_four_case": {
            "scores": PR_SCORES,
            "labels": PR_LABELS,
            "ap": float(oracles.enumerate_average_precision(PR_SCORES, PR_LABELS)),
        },
        "mcc_example": {"tp": 90, "fp": 10, "fn": 10, "tn": 890, "mcc": oracles.direct_metrics(90, 10, 10, 890)["mcc"]},
        "best_threshold": {
            "anom": ANOM,
            "norm": NORM,
            "youden": {"threshold": youden[0], "value": youden[1]},
            "mcc": {"threshold": mcc[0], "value": mcc[1]},
        },
    }


if __name__ == "__main__":
    out = ROOT / "tests" / "golden" / "oracles.json"
    out.write_text(json.dumps(build(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
