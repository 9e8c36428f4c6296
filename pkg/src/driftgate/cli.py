"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure, 2 bad input or configuration,
3 degenerate model.  Values given as flags override the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from . import bench as bench_mod
from . import metrics as metrics_mod
from .errors import DegenerateModelError, FormatError
from .harness import (
    ExperimentConfig,
    StatsSettings,
    export_selection_curve,
    run_experiment,
)
from .pipeline import JsonlLog, read_embedding_file, read_manifest, run_filter, write_manifest
from .scorer import score_batch
from .stats import (
    DEFAULT_INIT_SAMPLES,
    DEFAULT_INIT_SIGMA,
    DEFAULT_RESERVOIR_CAPACITY,
    NormalModel,
)
from . import embs

DEFAULT_THRESHOLD = 2500.0


def _default_threads() -> int:
    raw = os.environ.get("DRIFTGATE_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _stats_from_config(data: dict, args, dim: int) -> StatsSettings:
    raw = dict(data.get("stats", {}))
    alpha = raw.get("alpha")
    if args.alpha is not None:
        alpha = args.alpha
    return StatsSettings(
        dim=dim,
        init_samples=args.m0 if args.m0 is not None else int(raw.get("init_samples", DEFAULT_INIT_SAMPLES)),
        init_sigma=args.sigma if args.sigma is not None else float(raw.get("init_sigma", DEFAULT_INIT_SIGMA)),
        seed=args.seed if args.seed is not None else int(raw.get("seed", 0)),
        alpha=None if alpha is None else float(alpha),
        reservoir_capacity=int(raw.get("reservoir_capacity", DEFAULT_RESERVOIR_CAPACITY)),
    )


def cmd_filter(args) -> int:
    data = _load_toml(args.config) if args.config else {}
    pipe = dict(data.get("pipeline", {}))
    threshold = args.threshold if args.threshold is not None else float(
        pipe.get("threshold", DEFAULT_THRESHOLD)
    )
    threads = args.threads if args.threads is not None else int(
        pipe.get("threads", _default_threads())
    )

    header_dim = embs.read_header(args.input).dim
    dim = args.dim if args.dim is not None else int(data.get("stats", {}).get("dim", header_dim))
    stats = _stats_from_config(data, args, dim)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = stats.build()
    retained = []
    stream = read_embedding_file(args.input, expect_dim=dim)
    with JsonlLog(out / "decisions.jsonl") as log:
        summary = run_filter(
            stream,
            model,
            threshold,
            on_decision=lambda d: log.write(d.to_json_dict()),
            on_record=retained.append,
            threads=threads,
        )
    write_manifest(retained, out / "manifest.jsonl")
    export_selection_curve(summary, out / "curve.csv")
    model.save(out / "checkpoint.msns")

    print(f"frames seen:     {summary.frames_seen}")
    print(f"frames recorded: {summary.frames_recorded}")
    print(f"patches seen:    {summary.patches_seen}")
    print(f"patches kept:    {len(retained)}")
    print(f"reduction:       {summary.reduction_rate():.2f}%")
    return 0


def cmd_score(args) -> int:
    model = NormalModel.load(args.checkpoint)
    snap = model.snapshot()
    threads = args.threads if args.threads is not None else _default_threads()

    out_path = Path(args.out) if args.out else None
    sink = JsonlLog(out_path) if out_path else None
    try:
        for frame in read_embedding_file(args.input, expect_dim=snap.dim):
            vectors = np.stack([r.vector for r in frame]).astype(np.float64)
            scores = score_batch(snap, vectors, threads=threads)
            for record, s in zip(frame, scores):
                row = {
                    "frame": record.frame_index,
                    "patch": record.patch_index,
                    "score": float(s),
                    "stats_version": snap.version,
                }
                if sink:
                    sink.write(row)
                else:
                    print(json.dumps(row, separators=(",", ":")))
    finally:
        if sink:
            sink.close()
    return 0


def cmd_simulate(args) -> int:
    config = ExperimentConfig.from_toml(args.config)
    frames = list(read_embedding_file(args.source, expect_dim=config.stats.dim))
    report = run_experiment(config, frames, args.out)
    failures = sum(1 for c in report.cells if c.error is not None)
    print(f"cells run:  {len(report.cells)}")
    print(f"datasets:   {report.dataset_count}")
    print(f"failures:   {failures}")
    return 0


def cmd_metrics(args) -> int:
    rows = read_manifest(args.manifest)
    vectors = embs.read_embs(args.embs)
    payload: dict = {"rows": len(rows)}

    labeled = [(r, r["label"]) for r in rows if r.get("label") is not None]
    if len(labeled) < len(rows):
        print(f"warning: {len(rows) - len(labeled)} rows without label skipped", file=sys.stderr)
    if labeled:
        labels = [lab for _, lab in labeled]
        payload["balance"] = metrics_mod.balance(labels).to_json_dict()
        idx = [int(r["row"]) for r, _ in labeled]
        if max(idx) >= vectors.shape[0]:
            raise FormatError(
                "metadata", f"manifest row index {max(idx)} beyond {vectors.shape[0]} vectors"
            )
        threads = args.threads if args.threads is not None else _default_threads()
        payload["diversity"] = metrics_mod.diversity(
            vectors[idx].astype(np.float64),
            labels,
            pair_budget=args.pair_budget,
            seed=args.seed if args.seed is not None else 0,
            threads=threads,
        ).to_json_dict()
    else:
        print("warning: no labeled rows, balance skipped", file=sys.stderr)

    text = json.dumps(payload, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_bench(args) -> int:
    threads = args.threads if args.threads is not None else _default_threads()
    results = bench_mod.run_bench(
        dims=args.dims,
        patch_counts=args.patch_counts,
        reps=args.reps,
        warmup=args.warmup,
        threads=threads,
    )
    bench_mod.write_csv(results, args.out)
    failures = [r for r in results if r.error is not None]
    print(f"scenarios:  {len(results)}")
    print(f"failures:   {len(failures)}")
    for r in failures:
        print(f"  {r.operation} dim={r.dim} patches={r.patch_count}: {r.error}", file=sys.stderr)
    return 0


def cmd_stats_export(args) -> int:
    model = NormalModel.load(args.checkpoint)
    snap = model.snapshot()
    cov_trace = float(np.trace(model.empirical_cov()))
    print(f"dim:             {snap.dim}")
    print(f"count:           {snap.count}")
    print(f"alpha:           {snap.alpha:.6f}")
    print(f"mean norm:       {float(np.linalg.norm(snap.mean)):.6f}")
    print(f"cov trace:       {cov_trace:.6f}")
    print(f"reservoir rows:  {len(model.reservoir)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftgate",
        description="Streaming novelty filter over embedding files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_threads(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: DRIFTGATE_THREADS or 1)")

    p = sub.add_parser("filter", help="run the record/discard loop over an EMBS stream")
    p.add_argument("input", help="EMBS input file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="TOML config with [stats] and [pipeline]")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--m0", type=int, default=None, help="bootstrap sample count")
    p.add_argument("--sigma", type=float, default=None, help="bootstrap std")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None,
                   help="fixed shrinkage weight (default: estimate per update)")
    add_threads(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("score", help="score vectors against a checkpoint, no updates")
    p.add_argument("input", help="EMBS input file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="scores JSONL (default: stdout)")
    add_threads(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", help="run a redundancy x threshold sweep")
    p.add_argument("--config", required=True, help="TOML config with [stats]/[pipeline]/[sweep]")
    p.add_argument("--source", required=True, help="EMBS source stream")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="balance and diversity of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embs", required=True, help="EMBS file the manifest rows reference")
    p.add_argument("--out", help="report JSON (default: stdout)")
    p.add_argument("--pair-budget", type=int, default=metrics_mod.DEFAULT_PAIR_BUDGET)
    p.add_argument("--seed", type=int, default=None)
    add_threads(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="time scoring and update latency")
    p.add_argument("--dims", type=int, nargs="+", default=[2560])
    p.add_argument("--patch-counts", type=int, nargs="+",
                   default=list(bench_mod.DEFAULT_PATCH_COUNTS))
    p.add_argument("--reps", type=int, default=bench_mod.MIN_REPS)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--out", required=True, help="CSV output path")
    add_threads(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats-export", help="print a checkpoint summary")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_stats_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DegenerateModelError as exc:
        print(f"error: degenerate model: {exc}", file=sys.stderr)
        return 3
    except tomllib.TOMLDecodeError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
