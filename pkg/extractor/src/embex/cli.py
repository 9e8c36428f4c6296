"""The ``extract`` command.

Two modes share one output contract (EMBS + sidecar + provenance):

    extract --annotations boxes.csv --images frames/ --out patches.embs
    extract --synthetic mixture.json --out synth.embs

Exit codes: 0 success, 1 I/O failure or any failed rows (partial output
is still written), 2 malformed input (CSV, JSON spec, TOML, flags).
Inference runs single-threaded by default so repeated runs are
bit-stable; raise --threads when that matters less than latency.
"""

import argparse
import json
import sys

import torch

from . import embsio, network
from .extract import DEFAULT_BATCH, run_annotations, run_synthetic
from .patches import Preprocess


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Convert labeled image patches (or a synthetic spec) into EMBS files",
    )
    parser.add_argument("--annotations", help="CSV with columns path,x,y,w,h,label,frame")
    parser.add_argument("--images", help="directory the CSV paths are relative to")
    parser.add_argument("--out", required=True, help="EMBS file to write")
    parser.add_argument("--patch-size", type=int, default=network.PATCH_SIZE_DEFAULT,
                        help="square resize applied to every crop (default 64)")
    parser.add_argument("--synthetic", metavar="SPEC_JSON",
                        help="emit a seeded Gaussian mixture instead of reading images")
    parser.add_argument("--weights", help="local EfficientNet-B4 state dict (.pth)")
    parser.add_argument("--seed", type=int, default=0,
                        help="initialization seed when no weights are given")
    parser.add_argument("--preprocess", metavar="TOML",
                        help="override the pinned normalization/resize constants")
    parser.add_argument("--batch-size", type=int, default=DEFAULT_BATCH)
    parser.add_argument("--threads", type=int, default=1)
    return parser


def run(args) -> int:
    if args.synthetic:
        if args.annotations or args.images:
            raise ValueError("--synthetic replaces --annotations/--images; pass one mode")
        report = run_synthetic(args.synthetic, args.out)
        print(f"written:  {report.rows_written} vectors, dim {report.dim}")
        print(f"output:   {report.out_path}")
        return 0

    if not args.annotations or not args.images:
        raise ValueError("need --annotations and --images (or --synthetic)")
    if args.patch_size < 1:
        raise ValueError("--patch-size must be positive")
    if args.batch_size < 1:
        raise ValueError("--batch-size must be positive")
    torch.set_num_threads(max(1, args.threads))
    pre = Preprocess.from_toml(args.preprocess) if args.preprocess else Preprocess()
    report = run_annotations(
        args.annotations,
        args.images,
        args.out,
        patch_size=args.patch_size,
        preprocess=pre,
        weights=args.weights,
        seed=args.seed,
        batch_size=args.batch_size,
        threads=max(1, args.threads),
    )
    print(f"rows:     {report.rows_total}")
    print(f"written:  {report.rows_written} vectors, dim {report.dim}")
    print(f"failed:   {report.rows_failed}")
    print(f"output:   {report.out_path}")
    if report.failures:
        for entry in report.failures[:5]:
            print(f"  line {entry['line']}: {entry['error']}", file=sys.stderr)
        print(f"error file: {embsio.errors_path(report.out_path)}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
