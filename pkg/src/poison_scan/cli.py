"""Command-line front end: ``poison-scan {score,eval,filter,synth,bench}``.

Every subcommand prints one JSON object describing the resolved run
configuration and its results. Data outputs (score, label, embedding and
index files) depend only on the inputs and flags, never on ``--threads``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict

from .detectors import DetectorConfig
from .errors import CountMismatch, PoisonScanError
from .filtering import FilterPolicy, purify, select_removals
from .metrics import evaluate
from .pipeline import DatasetHandle, plan_batches, score_dataset
from .store import (
    Detector,
    l2_normalize,
    load_embeddings,
    load_labels,
    read_scores,
    save_embeddings,
    save_labels,
    write_scores,
)
from .synth import SyntheticConfig, generate

THREADS_ENV = "POISON_SCAN_THREADS"
DETECTORS = [d.name.lower() for d in Detector]


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"fraction must lie strictly between 0 and 1, got {text}")
    return value


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    return _positive_int(env) if env else 1


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--detector", choices=DETECTORS, default="dao")
    p.add_argument("--k", type=_positive_int, default=16)
    p.add_argument("--batch-size", type=_positive_int, default=2048)
    p.add_argument("--mode", choices=["partition", "resample"], default="partition")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker threads (falls back to ${THREADS_ENV}, then 1)")
    p.add_argument("--iforest-trees", type=_positive_int, default=100)
    p.add_argument("--lid-normalization", choices=["k", "k-1"], default="k")


def _detector_config(args) -> DetectorConfig:
    return DetectorConfig(kind=args.detector, k=args.k, iforest_trees=args.iforest_trees,
                          lid_normalization=args.lid_normalization, seed=args.seed)


def _emit(record: dict, path=None) -> None:
    text = json.dumps(record, indent=2, default=str)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    print(text)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def cmd_score(args, parser) -> dict:
    if args.require_text and (args.text is None or not os.path.exists(args.text)):
        parser.error("--require-text given but no readable --text file")
    threads = _resolve_threads(args)
    det = _detector_config(args)
    image = load_embeddings(args.image)
    text = load_embeddings(args.text) if args.text else None
    if args.normalize:
        image = l2_normalize(image)
        text = None if text is None else l2_normalize(text)
    handle = DatasetHandle(image, text)
    plan = plan_batches(handle.count, args.batch_size, args.seed, args.mode, k=args.k)
    start = time.perf_counter()
    scores = score_dataset(handle, det, plan, threads=threads)
    wall = time.perf_counter() - start
    write_scores(args.out, scores, fmt=args.format)
    record = {
        "command": "score",
        "config": {**vars_clean(args), "threads": threads, "detector_config": {**asdict(det), "kind": det.kind.name.lower()}},
        "n": handle.count,
        "n_batches": len(plan.batches) if plan.batches else handle.count,
        "wall_time_seconds": wall,
        "output": args.out,
    }
    _emit(record, args.log or args.out + ".json")
    return record


def cmd_eval(args, parser) -> dict:
    scores = read_scores(args.scores)
    labels = load_labels(args.labels)
    if labels.count != scores.count:
        raise CountMismatch(f"{scores.count} scores but {labels.count} labels")
    wall = 0.0
    log = args.score_log or args.scores + ".json"
    if os.path.exists(log):
        with open(log) as f:
            wall = float(json.load(f).get("wall_time_seconds", 0.0))
    report = evaluate(scores, labels, wall_time_seconds=wall)
    if args.out:
        with open(args.out, "w") as f:
            f.write(report.to_json() + "\n")
    record = {"command": "eval", "config": vars_clean(args), "report": asdict(report)}
    _emit(record)
    return record


def cmd_filter(args, parser) -> dict:
    if args.threshold is not None:
        policy = FilterPolicy.absolute(args.threshold)
    elif args.sigma_multiplier is not None:
        policy = FilterPolicy.mean_plus_std(args.sigma_multiplier)
    else:
        policy = FilterPolicy.top_fraction(args.top_fraction if args.top_fraction is not None else 0.10)
    scores = read_scores(args.scores)
    image = load_embeddings(args.image)
    text = load_embeddings(args.text) if args.text else None
    labels = load_labels(args.labels) if args.labels else None
    handle = DatasetHandle(image, text, labels)
    if scores.count != handle.count:
        raise CountMismatch(f"{scores.count} scores but {handle.count} samples")
    removals = select_removals(scores, policy)
    kept = purify(handle, removals, out_dir=args.out_dir)
    record = {
        "command": "filter",
        "config": {**vars_clean(args), "policy": asdict(policy)},
        "n": handle.count,
        "n_removed": int(removals.size),
        "n_kept": int(kept.size),
    }
    if labels is not None:
        removed_bd = int(labels.flags[removals].sum())
        record["backdoor_removed"] = removed_bd
        record["backdoor_recall"] = removed_bd / labels.n_backdoor if labels.n_backdoor else None
    _emit(record)
    return record


def _synth_config(args) -> SyntheticConfig:
    return SyntheticConfig(n=args.n, d=args.d, n_clusters=args.n_clusters, poison_rate=args.poison_rate,
                           sigma_clean=args.sigma_clean, sigma_backdoor=args.sigma_backdoor,
                           backdoor_offset=args.backdoor_offset, with_text=args.with_text, seed=args.seed)


def cmd_synth(args, parser) -> dict:
    cfg = _synth_config(args)
    image, text, labels = generate(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    save_embeddings(os.path.join(args.out_dir, "image.emb"), image)
    if text is not None:
        save_embeddings(os.path.join(args.out_dir, "text.emb"), text)
    save_labels(os.path.join(args.out_dir, "labels.lbl"), labels)
    record = {"command": "synth", "config": asdict(cfg), "n_backdoor": labels.n_backdoor,
              "out_dir": args.out_dir}
    _emit(record)
    return record


def cmd_bench(args, parser) -> dict:
    if args.d < 2:
        parser.error("--d must be at least 2")
    threads = _resolve_threads(args)
    rate = args.poison_rate if round(args.poison_rate * args.n) >= 1 else 0.0
    cfg = SyntheticConfig(n=args.n, d=args.d, poison_rate=rate,
                          with_text=args.with_text, seed=args.seed)
    start = time.perf_counter()
    image, text, labels = generate(cfg)
    gen_time = time.perf_counter() - start
    handle = DatasetHandle(image, text, labels)
    det = _detector_config(args)
    plan = plan_batches(handle.count, args.batch_size, args.seed, args.mode, k=args.k)
    start = time.perf_counter()
    scores = score_dataset(handle, det, plan, threads=threads)
    wall = time.perf_counter() - start
    digest = hashlib.sha256(scores.scores.astype("<f8").tobytes()).hexdigest()
    if args.out:
        write_scores(args.out, scores)
    record = {
        "command": "bench",
        "config": {**vars_clean(args), "threads": threads},
        "n": handle.count,
        "d": args.d,
        "generate_seconds": gen_time,
        "wall_time_seconds": wall,
        "samples_per_second": handle.count / wall if wall > 0 else None,
        "scores_sha256": digest,
    }
    _emit(record, args.log)
    return record


def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poison-scan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score every image embedding")
    p.add_argument("--image", required=True)
    p.add_argument("--text")
    p.add_argument("--require-text", action="store_true")
    _add_detector_flags(p)
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["binary", "csv"], default="binary")
    p.add_argument("--log", help="run log path (default: <out>.json)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="AUC and FPR@95 of a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--score-log", help="score run log to take the wall time from (default: <scores>.json)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("filter", help="remove top-scoring samples and write the purified set")
    p.add_argument("--scores", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--text")
    p.add_argument("--labels")
    p.add_argument("--out-dir", required=True)
    policy = p.add_mutually_exclusive_group()
    policy.add_argument("--top-fraction", type=_fraction)
    policy.add_argument("--threshold", type=float)
    policy.add_argument("--sigma-multiplier", type=float)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("synth", help="write a synthetic clean/backdoor dataset")
    defaults = SyntheticConfig()
    p.add_argument("--n", type=_positive_int, default=defaults.n)
    p.add_argument("--d", type=_positive_int, default=defaults.d)
    p.add_argument("--n-clusters", type=_positive_int, default=defaults.n_clusters)
    p.add_argument("--poison-rate", type=float, default=defaults.poison_rate)
    p.add_argument("--sigma-clean", type=float, default=defaults.sigma_clean)
    p.add_argument("--sigma-backdoor", type=float, default=defaults.sigma_backdoor)
    p.add_argument("--backdoor-offset", type=float, default=defaults.backdoor_offset)
    p.add_argument("--with-text", action=argparse.BooleanOptionalAction, default=defaults.with_text)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time scoring on generated data")
    p.add_argument("--n", type=_positive_int, default=1_000_000)
    p.add_argument("--d", type=int, default=512)
    p.add_argument("--poison-rate", type=float, default=0.0001)
    p.add_argument("--with-text", action=argparse.BooleanOptionalAction, default=False)
    _add_detector_flags(p)
    p.add_argument("--out", help="also write the scores here")
    p.add_argument("--log")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    try:
        args.func(args, sub.choices[args.command])
    except (PoisonScanError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
