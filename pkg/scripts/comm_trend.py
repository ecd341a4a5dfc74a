"""Measure PSI and share traffic of one DP extension pass as the client count grows.

    python scripts/comm_trend.py --clients 2 4 8 16
"""

import argparse

from dpfedrec.experiments import comm_trend, loglog_slope


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--clients", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--overlap", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    points, slope = comm_trend(args.clients, k=args.k, overlap=args.overlap, seed=args.seed)
    print(f"{'l':>4}{'users/client':>14}{'edges/client':>14}{'psi':>12}{'share':>12}{'total':>12}")
    for p in points:
        print(f"{p.clients:>4}{p.avg_users:>14.1f}{p.avg_edges:>14.1f}{p.psi_bytes:>12}{p.share_bytes:>12}{p.total:>12}")
    ls = [p.clients for p in points]
    print(f"log-log slope: total {slope:.3f}, psi {loglog_slope(ls, [p.psi_bytes for p in points]):.3f}, "
          f"share {loglog_slope(ls, [p.share_bytes for p in points]):.3f}")
    print(f"reference l(l-1): {loglog_slope(ls, [l * (l - 1) for l in ls]):.3f}")


if __name__ == "__main__":
    main()
