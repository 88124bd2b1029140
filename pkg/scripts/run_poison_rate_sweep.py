"""AUC over poisoning rates and k for the neighbourhood detectors; writes a CSV grid."""
import argparse

from poison_scan.synth import SyntheticConfig, poison_rate_sensitivity_sweep, write_sweep_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20_480)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--n-clusters", type=int, default=4)
    ap.add_argument("--with-text", action="store_true")
    ap.add_argument("--rates", type=float, nargs="+", default=[0.0001, 0.001, 0.01, 0.05, 0.1])
    ap.add_argument("--k", type=int, nargs="+", default=[16, 64, 256])
    ap.add_argument("--detectors", nargs="+", default=["lid", "kdist", "slof", "dao"])
    ap.add_argument("--batch-size", type=int, default=2048)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="poison_rate_sweep.csv")
    args = ap.parse_args()

    cfg = SyntheticConfig(n=args.n, d=args.d, n_clusters=args.n_clusters, with_text=args.with_text, seed=args.seed)
    rows = poison_rate_sensitivity_sweep(cfg, args.rates, args.k, args.detectors, args.batch_size, args.threads)
    write_sweep_csv(args.out, rows)
    for r in rows:
        print(f"{r.detector:>6} rate={r.rate:<7g} k={r.k:<4} auc={r.auc:.4f}")


if __name__ == "__main__":
    main()
