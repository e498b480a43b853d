"""Wall time of the variants on nested subsets, with a linear fit per variant.

Thin wrapper around ``secoda bench``; writes the CSV table and the fit summary
(``<out>.run.json``).

    python3 scripts/scaling.py --n 500000 --repeats 3 --out bench.csv
"""

import argparse
import sys

from secoda.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="helix")
    ap.add_argument("--n", type=int, default=500_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--variants", default="final,pruneless,stepless")
    ap.add_argument("--out", default="bench.csv")
    args = ap.parse_args()
    return cli_main(
        [
            "bench",
            "--kind", args.kind,
            "--n", str(args.n),
            "--seed", str(args.seed),
            "--repeats", str(args.repeats),
            "--variants", args.variants,
            "--out", args.out,
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
