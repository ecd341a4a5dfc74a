"""Run the full comparison grid and print the tables.

For each client count, runs Centralized, FedGraphNN and DP-FedGraphNN once
and FedRec / DP-FedRec once per hop count. Output goes to
``<out>/<dataset>/l<clients>/<mode>[-k<K>]/``.

    python scripts/run_matrix.py --dataset data/ml-100k --clients 8 12 --k 1 5
"""

import argparse
from pathlib import Path

from dpfedrec.config import MODE_ORDER, load_config
from dpfedrec.federation import Dataset, run_experiment
from dpfedrec.report import collect_rows, format_table, write_csv, write_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="data/ml-100k")
    ap.add_argument("--config", help="INI file with shared settings")
    ap.add_argument("--clients", type=int, nargs="+", default=[8, 12])
    ap.add_argument("--k", type=int, nargs="+", default=[1, 5])
    ap.add_argument("--rounds", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/matrix")
    args = ap.parse_args()

    dataset = Dataset.load(args.dataset)
    root = Path(args.out) / dataset.name
    for l in args.clients:
        for mode in MODE_ORDER:
            for k in args.k if mode.extends else [args.k[0]]:
                cfg = load_config(args.config, {
                    "dataset": args.dataset, "mode": mode.value, "clients": l, "k": k,
                    "rounds": args.rounds, "seed": args.seed,
                })
                name = f"{mode.value}-k{k}" if mode.extends else mode.value
                res = run_experiment(cfg, dataset)
                write_run(res, root / f"l{l}" / name)
                f = res.final
                print(f"l={l:<3} {name:<16} RMSE {f['rmse']:.4f}  ({res.timing['wall_clock_s']:.0f}s)", flush=True)

    rows = collect_rows(root)
    print()
    print(format_table(rows))
    write_csv(rows, root / "table.csv")


if __name__ == "__main__":
    main()
