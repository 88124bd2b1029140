"""k-dist of clean vs. poisoned points in one batch as the poisoned count grows.

Prints one row per count with medians and quartiles; --csv also writes them.
"""
import argparse
import csv
from dataclasses import asdict, fields

from poison_scan.synth import KdistSummary, SyntheticConfig, kdist_distribution_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--n-clusters", type=int, default=50)
    ap.add_argument("--sigma-clean", type=float, default=0.2)
    ap.add_argument("--sigma-backdoor", type=float, default=0.02)
    ap.add_argument("--batch-size", type=int, default=1024)
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--counts", type=int, nargs="+", default=[1, 5, 10, 50])
    ap.add_argument("--no-text", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args()

    cfg = SyntheticConfig(d=args.d, n_clusters=args.n_clusters, sigma_clean=args.sigma_clean,
                          sigma_backdoor=args.sigma_backdoor, with_text=not args.no_text, seed=args.seed)
    rows = kdist_distribution_experiment(cfg, args.batch_size, args.k, tuple(args.counts))
    print(f"{'count':>6} {'clean med':>10} {'clean IQR':>19} {'poison med':>11} {'poison IQR':>19}")
    for r in rows:
        print(f"{r.backdoor_count:>6} {r.clean_median:>10.4f} [{r.clean_q1:.4f}, {r.clean_q3:.4f}]"
              f" {r.backdoor_median:>11.4f} [{r.backdoor_q1:.4f}, {r.backdoor_q3:.4f}]")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=[x.name for x in fields(KdistSummary)])
            w.writeheader()
            w.writerows(asdict(r) for r in rows)


if __name__ == "__main__":
    main()
