"""Median final RMSE of all five systems on the small non-IID fixture.

    python scripts/noniid_benchmark.py --seeds 0 1 2 3 4
"""

import argparse

from dpfedrec.config import MODE_ORDER
from dpfedrec.experiments import medians, noniid_rmse


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    args = ap.parse_args()

    rmse = noniid_rmse(MODE_ORDER, args.seeds)
    for mode, med in medians(rmse).items():
        vals = " ".join(f"{v:.4f}" for v in rmse[mode])
        print(f"{mode:<14} median {med:.4f}   [{vals}]")


if __name__ == "__main__":
    main()
