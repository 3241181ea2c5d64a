"""Command-line surface: encode, decode, optimize, evaluate, interpolate,
default-weights.

Exit codes: 2 bad flags, 3 I/O failure, 4 infeasible budget, 5 malformed
bitstream, 6 bad run/spec inputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from xstw import harness, metrics
from xstw.codec import BitstreamError, BudgetError, Bitstream, coded_samples, decode, encode
from xstw.harness import Evaluator, FitnessSpec, RunRecord, parse_spec_file
from xstw.pixel_io import LabelMap, load_image, store_image
from xstw.weights import (
    default_table,
    parse_config,
    table_to_config,
    table_to_vector,
    vector_to_table,
)

EXIT_BAD_FLAGS = 2
EXIT_IO = 3
EXIT_BUDGET = 4
EXIT_BITSTREAM = 5
EXIT_SPEC = 6


def _load_weights(path: str | None):
    if path is None:
        return default_table()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read weights: {exc}") from None
    try:
        return parse_config(text)
    except ValueError as exc:
        raise _CliError(EXIT_SPEC, f"bad weights file: {exc}") from None


class _CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def cmd_encode(args) -> int:
    table = _load_weights(args.weights)
    try:
        img = load_image(args.input)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read image: {exc}") from None
    except ValueError as exc:
        raise _CliError(EXIT_IO, f"bad image: {exc}") from None
    try:
        bs = encode(img, table, args.bpp)
    except BudgetError as exc:
        raise _CliError(EXIT_BUDGET, str(exc)) from None
    try:
        Path(args.output).write_bytes(bs.tobytes())
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot write bitstream: {exc}") from None
    achieved = bs.payload_bits / coded_samples(bs.width, bs.height, bs.components)
    print(f"{achieved:.6f}")
    return 0


def cmd_decode(args) -> int:
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read bitstream: {exc}") from None
    try:
        bs = Bitstream.frombytes(data)
        img = decode(bs)
    except BitstreamError as exc:
        raise _CliError(EXIT_BITSTREAM, str(exc)) from None
    try:
        store_image(img, args.output)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot write image: {exc}") from None
    if args.show_weights:
        print(table_to_config(bs.table), end="")
    return 0


def _spec_from_file(path: str):
    try:
        return parse_spec_file(path)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read spec: {exc}") from None
    except ValueError as exc:
        raise _CliError(EXIT_SPEC, str(exc)) from None


def cmd_optimize(args) -> int:
    spec, seed, evals, folds = _spec_from_file(args.spec)
    if folds is not None:
        raise _CliError(
            EXIT_SPEC, "fold runs are driven through the API (harness.run_folds)"
        )
    try:
        record = harness.run_optimization(
            spec, seed=seed, budget_evals=evals, threads=args.threads
        )
    except ValueError as exc:
        raise _CliError(EXIT_SPEC, str(exc)) from None
    out = Path(args.out)
    harness.write_run_record(record, out)
    print(f"best_loss {record.best_loss:.6f}")
    print(f"weights {out / 'top10' / 'rank01.weights'}")
    return 0


def _corpus_from_dir(directory: str) -> tuple:
    corpus = tuple(
        sorted(str(p) for ext in ("*.pgm", "*.ppm") for p in Path(directory).glob(ext))
    )
    if not corpus:
        raise _CliError(EXIT_SPEC, f"no PGM/PPM images under {directory}")
    return corpus


def _mean_metric_score(spec: FitnessSpec, table, threads: int) -> float:
    """Raw metric mean (higher is better except external), inf allowed."""
    evaluator = Evaluator(spec, threads=threads)
    try:
        if spec.metric == "external":
            return evaluator.loss_for_table(table)
        scores = []
        for i, img in enumerate(evaluator.images):
            reconstructed = decode(encode(img, table, spec.target_bpp))
            if spec.metric == "ms_ssim":
                scores.append(metrics.ms_ssim(img, reconstructed).value)
            elif spec.metric == "psnr":
                scores.append(metrics.psnr(img, reconstructed).value)
            else:
                truth = evaluator.truths[i]
                pred_labels = np.minimum(
                    reconstructed.samples.astype(np.int64), truth.num_classes - 1
                )
                pred = LabelMap(labels=pred_labels, num_classes=truth.num_classes)
                scores.append(metrics.iou(pred, truth, truth.num_classes).value)
        return float(np.mean(scores))
    finally:
        evaluator.close()


def cmd_evaluate(args) -> int:
    corpus = _corpus_from_dir(args.corpus)
    labels = ()
    if args.labels:
        labels = tuple(str(Path(args.labels) / Path(p).name) for p in corpus)
    try:
        spec = FitnessSpec(
            metric=args.metric,
            corpus=corpus,
            target_bpp=args.bpp,
            labels=labels,
            command=args.command,
        )
        table = _load_weights(args.weights)
        score = _mean_metric_score(spec, table, args.threads)
    except _CliError:
        raise
    except BudgetError as exc:
        raise _CliError(EXIT_BUDGET, str(exc)) from None
    except (OSError, ValueError) as exc:
        raise _CliError(EXIT_SPEC, str(exc)) from None
    print("inf" if math.isinf(score) else f"{score:.6f}")
    return 0


def _anchor_from_dir(run_dir: str, spec_template: FitnessSpec) -> RunRecord:
    summary_path = Path(run_dir) / "summary.txt"
    try:
        summary = dict(
            line.split(":", 1)
            for line in summary_path.read_text().splitlines()
            if ":" in line
        )
        anchor_bpp = float(summary["target_bpp"])
        tables = harness.load_top10(run_dir)
    except OSError as exc:
        raise _CliError(EXIT_SPEC, f"bad anchor {run_dir}: {exc}") from None
    except (KeyError, ValueError) as exc:
        raise _CliError(EXIT_SPEC, f"bad anchor {run_dir}: {exc}") from None
    vectors = [table_to_vector(t) for t in tables]
    spec = dataclasses.replace(spec_template, target_bpp=anchor_bpp)
    return RunRecord(
        seed=0,
        spec=spec,
        history=[],
        best_vector=vectors[0],
        best_loss=math.nan,
        top10=[(math.nan, v) for v in vectors],
        wall_clock=0.0,
    )


def cmd_interpolate(args) -> int:
    if not args.anchors:
        raise _CliError(EXIT_SPEC, "no anchor run directories given")
    spec, seed, _, _ = _spec_from_file(args.spec)
    anchors = [_anchor_from_dir(d, spec) for d in args.anchors]
    try:
        targets = [float(tok) for tok in args.bpp.split(",") if tok]
    except ValueError:
        raise _CliError(EXIT_SPEC, f"bad --bpp list {args.bpp!r}") from None
    if not targets:
        raise _CliError(EXIT_SPEC, "empty --bpp list")
    results = harness.interpolate_bitrates(anchors, targets, seed=seed, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["bpp,loss"]
    for target in targets:
        loss, vector = results[float(target)]
        name = f"bpp{target:g}.weights"
        (out / name).write_text(table_to_config(vector_to_table(vector)))
        lines.append(f"{target:g},{loss:.6f}")
    (out / "interpolation.csv").write_text("\n".join(lines) + "\n")
    print(out / "interpolation.csv")
    return 0


def cmd_default_weights(args) -> int:
    text = table_to_config(default_table())
    if args.output:
        try:
            Path(args.output).write_text(text)
        except OSError as exc:
            raise _CliError(EXIT_IO, f"cannot write weights: {exc}") from None
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xstw",
        description="Wavelet image codec with tunable sub-band weights and a"
        " CMA-ES weight optimization harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a PGM/PPM image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--bpp", type=float, required=True)
    p.add_argument("--weights", help="weight config file (default table if omitted)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream to PGM/PPM")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--show-weights", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("optimize", help="run a CMA-ES weight optimization")
    p.add_argument("--spec", required=True, help="run spec file (key=value)")
    p.add_argument("--out", required=True, help="run record output directory")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="score weights on a corpus")
    p.add_argument("--weights")
    p.add_argument("--metric", required=True, choices=harness.METRICS)
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels")
    p.add_argument("--command")
    p.add_argument("--bpp", type=float, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("interpolate", help="derive weights for new bitrates")
    p.add_argument("--anchors", nargs="+", help="anchor run record directories")
    p.add_argument("--bpp", required=True, help="comma-separated target bitrates")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("default-weights", help="emit the default weight table")
    p.add_argument("--output")
    p.set_defaults(func=cmd_default_weights)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
