"""Command-line surface: convert, synth, eval, render, bench.

Exit codes: 0 success, 1 I/O failure, 2 schema/validation failure,
3 internal invariant breach. Outputs are written to a temp file and
renamed, so a failed run never leaves partial output behind.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .binarize import binarize
from .metrics import aggregate_rows, evaluate
from .raster import (
    BinaryImage,
    GrayImage,
    ImageFormatError,
    _atomic_write,
    load_image,
    median_filter_5x5,
    save_image,
)
from .synth import CorpusParams, ScriptSpec, SpecValidationError, corpus, rasterize, spec_from_json
from .trace_model import OnlineTrace, TraceSchemaError, from_json, to_csv, to_json, to_svg
from .tracer import (
    HEADING_CLAMP,
    RESIDUE_VISITED_FRACTION,
    STEER_DAMPING,
    STEER_GAIN,
    derive_geometry,
    trace_all,
)
from .width import EmptySignatureError, WidthMode, average_width, sectional_widths

__all__ = ["RunConfig", "main", "entrypoint", "run_pipeline"]

ENV_SEED = "STROKETRACE_SEED"


class _CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    command: str
    input: Path | None = None
    output: Path | None = None
    svg: Path | None = None
    csv: Path | None = None
    underlay: Path | None = None
    invert: bool = False
    truck_scale: float = 1.0
    width_mode: WidthMode = WidthMode.HISTOGRAM_WEIGHTED
    k: int = 3
    debug_stages: Path | None = None
    snapshot_interval: int | None = None
    seed: int = 0
    match_threshold_scale: float = 3.0
    # expert tuning, defaults match the tracer's
    gain: float = STEER_GAIN
    damping: float = STEER_DAMPING
    heading_clamp: float = HEADING_CLAMP
    lookahead_scale: float = 2.0
    wheel_scale: float = 0.25
    step_scale: float = 0.5
    residue_threshold: float = RESIDUE_VISITED_FRACTION
    # synth
    spec_path: Path | None = None
    image_out: Path | None = None
    truth_out: Path | None = None
    corpus_n: int | None = None
    out_dir: Path | None = None
    # eval
    truth: Path | None = None
    recovered: Path | None = None
    truth_dir: Path | None = None
    recovered_dir: Path | None = None
    # bench
    n_items: int = 50
    dump_dir: Path | None = None

    def __post_init__(self):
        if self.truck_scale <= 0:
            raise _CommandError(2, "truck scale must be positive")
        if self.k < 1:
            raise _CommandError(2, "k must be >= 1")


def run_pipeline(gray: GrayImage, config: RunConfig, source: str) -> OnlineTrace:
    """Full conversion: filter, binarize, size the vehicle, trace.

    An image with no detected ink converts to an empty trace rather than
    failing: a blank page is a valid, empty script.
    """
    debug = config.debug_stages
    if debug is not None:
        debug.mkdir(parents=True, exist_ok=True)
        save_image(gray, debug / "stage_a_original.pgm")
    filtered = median_filter_5x5(gray)
    binary, hist_report = binarize(filtered, invert=config.invert)
    if debug is not None:
        save_image(binary, debug / "stage_b_binarized.pgm")
        _atomic_write(
            debug / "stage_b_histogram.json",
            json.dumps(hist_report.to_dict(), indent=2).encode(),
        )
    if not binary.mask.any():
        trace = OnlineTrace(source, (gray.width, gray.height), 0.0, [])
    else:
        est = average_width(sectional_widths(binary), config.width_mode, config.k)
        geom = derive_geometry(
            est,
            config.truck_scale,
            wheel_frac=config.wheel_scale,
            step_frac=config.step_scale,
            lookahead_frac=config.lookahead_scale,
        )
        on_snapshot = None
        snapshot_every = None
        if debug is not None:
            snapshot_every = config.snapshot_interval or max(
                1, int(binary.foreground_count / geom.step / 4)
            )

            def on_snapshot(tick, visited):
                save_image(
                    BinaryImage(visited), debug / f"stage_c_traversal_{tick:06d}.pgm"
                )

        trace = trace_all(
            binary,
            geom,
            source=source,
            avg_width=est.avg_width,
            gain=config.gain,
            damping=config.damping,
            clamp=config.heading_clamp,
            residue_threshold=config.residue_threshold,
            snapshot_every=snapshot_every,
            on_snapshot=on_snapshot,
        )
    if debug is not None:
        _atomic_write(debug / "stage_e_overlay.svg", to_svg(trace, underlay=gray))
    return trace


def cmd_convert(config: RunConfig) -> int:
    if not config.input.exists():
        raise _CommandError(1, f"input image not found: {config.input}")
    gray = load_image(config.input)
    trace = run_pipeline(gray, config, source=str(config.input))
    out = config.output or config.input.with_suffix(".trace.json")
    _atomic_write(out, to_json(trace))
    if config.svg is not None:
        _atomic_write(config.svg, to_svg(trace))
    if config.csv is not None:
        _atomic_write(config.csv, to_csv(trace).encode())
    print(f"wrote {out}", file=sys.stderr)
    return 0


def cmd_synth(config: RunConfig) -> int:
    if config.spec_path is not None:
        spec = spec_from_json(config.spec_path.read_bytes())
        img, truth = rasterize(spec)
        image_out = config.image_out or config.spec_path.with_suffix(".pgm")
        truth_out = config.truth_out or config.spec_path.with_suffix(".truth.json")
        save_image(img, image_out)
        _atomic_write(truth_out, to_json(truth))
        print(f"wrote {image_out} and {truth_out}", file=sys.stderr)
        return 0
    if config.corpus_n is None:
        raise _CommandError(2, "synth needs either --spec or --corpus")
    out_dir = config.out_dir or Path("corpus")
    out_dir.mkdir(parents=True, exist_ok=True)
    params = CorpusParams(n_items=config.corpus_n, master_seed=config.seed)
    for i, (img, truth, spec) in enumerate(corpus(params)):
        save_image(img, out_dir / f"item_{i:04d}.pgm")
        _atomic_write(out_dir / f"item_{i:04d}.truth.json", to_json(truth))
        from .synth import spec_to_json

        _atomic_write(out_dir / f"item_{i:04d}.spec.json", spec_to_json(spec))
    print(f"wrote {config.corpus_n} items to {out_dir}", file=sys.stderr)
    return 0


def _load_trace(path: Path) -> OnlineTrace:
    if not path.exists():
        raise _CommandError(1, f"trace file not found: {path}")
    return from_json(path.read_bytes())


def _eval_pair(truth: OnlineTrace, recovered: OnlineTrace, config: RunConfig):
    try:
        return evaluate(
            truth, recovered, match_threshold_scale=config.match_threshold_scale
        )
    except ValueError as exc:
        raise _CommandError(2, str(exc)) from exc


def cmd_eval(config: RunConfig) -> int:
    if config.truth is not None and config.recovered is not None:
        report = _eval_pair(_load_trace(config.truth), _load_trace(config.recovered), config)
        payload = json.dumps(report.to_dict(), indent=2).encode()
        if config.output is not None:
            _atomic_write(config.output, payload)
        else:
            sys.stdout.write(payload.decode() + "\n")
        return 0
    if config.truth_dir is None or config.recovered_dir is None:
        raise _CommandError(2, "eval needs --truth/--recovered or --truth-dir/--recovered-dir")
    rows = []
    truth_files = sorted(config.truth_dir.glob("*.truth.json"))
    if not truth_files:
        raise _CommandError(1, f"no *.truth.json files in {config.truth_dir}")
    for tf in truth_files:
        stem = tf.name.split(".")[0]
        rf = config.recovered_dir / f"{stem}.trace.json"
        if not rf.exists():
            raise _CommandError(1, f"no recovered trace for {stem}: {rf}")
        truth = _load_trace(tf)
        report = _eval_pair(truth, _load_trace(rf), config)
        rows.append(_report_row(stem, truth.avg_width, None, report))
    doc = {"items": rows, "summary": aggregate_rows(rows)}
    payload = json.dumps(doc, indent=2).encode()
    if config.output is not None:
        _atomic_write(config.output, payload)
    else:
        sys.stdout.write(payload.decode() + "\n")
    return 0


def cmd_render(config: RunConfig) -> int:
    trace = _load_trace(config.input)
    underlay = load_image(config.underlay) if config.underlay is not None else None
    out = config.output or config.input.with_suffix(".svg")
    _atomic_write(out, to_svg(trace, underlay=underlay))
    print(f"wrote {out}", file=sys.stderr)
    return 0


def _report_row(item, pen_width: float, noise, report) -> dict:
    matched = len(report.matched_pairs)
    correct = sum(p.direction_correct for p in report.matched_pairs)
    mean_dtw = report.mean_dtw_per_point
    row = {
        "item": item,
        "pen_width": pen_width,
        "truth_strokes": report.truth_strokes,
        "recovered_strokes": report.recovered_strokes,
        "stroke_count_exact": report.truth_strokes == report.recovered_strokes,
        "matched": matched,
        "direction_correct": correct,
        "direction_accuracy": report.direction_accuracy,
        "mean_dtw_per_point": None if mean_dtw is None else round(mean_dtw, 4),
        "dtw_within_pen": mean_dtw is not None and mean_dtw <= 1.0 * pen_width,
    }
    if noise is not None:
        row["noise"] = round(noise, 6)
    return row


def cmd_bench(config: RunConfig) -> int:
    """Generate a corpus, convert every item, and score the recoveries.

    The summary JSON is deterministic for a fixed seed; timing goes to
    stderr so it never perturbs comparable output.
    """
    params = CorpusParams(n_items=config.n_items, master_seed=config.seed)
    items = corpus(params)
    rows = []
    total_start = time.perf_counter()
    for i, (gray, truth, spec) in enumerate(items):
        item_start = time.perf_counter()
        trace = run_pipeline(gray, config, source=f"bench:{i:04d}")
        report = _eval_pair(truth, trace, config)
        elapsed = time.perf_counter() - item_start
        rows.append(_report_row(i, spec.pen_width, spec.noise, report))
        print(f"item {i:04d}: {elapsed:.3f}s", file=sys.stderr)
        if config.dump_dir is not None:
            config.dump_dir.mkdir(parents=True, exist_ok=True)
            save_image(gray, config.dump_dir / f"item_{i:04d}.pgm")
            _atomic_write(config.dump_dir / f"item_{i:04d}.truth.json", to_json(truth))
            _atomic_write(config.dump_dir / f"item_{i:04d}.trace.json", to_json(trace))
    total = time.perf_counter() - total_start
    summary = aggregate_rows(rows)
    doc = {
        "params": {"n_items": config.n_items, "seed": config.seed},
        "items": rows,
        "summary": summary,
    }
    payload = json.dumps(doc, indent=2).encode()
    if config.output is not None:
        _atomic_write(config.output, payload)
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    print(f"total {total:.2f}s, {total / len(items):.3f}s per image", file=sys.stderr)
    return 0


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _add_pipeline_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--invert", action="store_true", help="foreground is the light side")
    sub.add_argument("--truck-scale", type=_positive_float, default=1.0)
    sub.add_argument(
        "--width-mode",
        choices=[m.value for m in WidthMode],
        default=WidthMode.HISTOGRAM_WEIGHTED.value,
    )
    sub.add_argument("--k", type=int, default=3, help="width values used by the estimator")
    expert = sub.add_argument_group("expert tuning")
    expert.add_argument("--gain", type=float, default=STEER_GAIN)
    expert.add_argument("--damping", type=float, default=STEER_DAMPING)
    expert.add_argument("--heading-clamp", type=float, default=HEADING_CLAMP)
    expert.add_argument("--lookahead-scale", type=_positive_float, default=2.0)
    expert.add_argument("--wheel-scale", type=_positive_float, default=0.25)
    expert.add_argument("--step-scale", type=_positive_float, default=0.5)
    expert.add_argument("--residue-threshold", type=float, default=RESIDUE_VISITED_FRACTION)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stroketrace",
        description="Recover ordered stroke trajectories from raster script images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_convert = sub.add_parser("convert", help="image -> trace JSON")
    p_convert.add_argument("input", type=Path)
    p_convert.add_argument("--out", type=Path, default=None)
    p_convert.add_argument("--svg", type=Path, default=None)
    p_convert.add_argument("--csv", type=Path, default=None)
    p_convert.add_argument("--debug-stages", type=Path, default=None)
    p_convert.add_argument("--snapshot-interval", type=int, default=None)
    _add_pipeline_flags(p_convert)

    p_synth = sub.add_parser("synth", help="render a known script to an image")
    p_synth.add_argument("--spec", type=Path, default=None)
    p_synth.add_argument("--image", type=Path, default=None)
    p_synth.add_argument("--truth", type=Path, default=None)
    p_synth.add_argument("--corpus", type=int, default=None, metavar="N")
    p_synth.add_argument("--out-dir", type=Path, default=None)
    p_synth.add_argument("--seed", type=int, default=None)

    p_eval = sub.add_parser("eval", help="score a recovered trace against truth")
    p_eval.add_argument("--truth", type=Path, default=None)
    p_eval.add_argument("--recovered", type=Path, default=None)
    p_eval.add_argument("--truth-dir", type=Path, default=None)
    p_eval.add_argument("--recovered-dir", type=Path, default=None)
    p_eval.add_argument("--out", type=Path, default=None)
    p_eval.add_argument("--match-threshold-scale", type=_positive_float, default=3.0)

    p_render = sub.add_parser("render", help="trace JSON -> SVG")
    p_render.add_argument("input", type=Path)
    p_render.add_argument("--out", type=Path, default=None)
    p_render.add_argument("--underlay", type=Path, default=None)

    p_bench = sub.add_parser("bench", help="corpus round trip with aggregate scores")
    p_bench.add_argument("--n", type=int, default=50)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--out", type=Path, default=None)
    p_bench.add_argument("--dump-dir", type=Path, default=None)
    p_bench.add_argument("--match-threshold-scale", type=_positive_float, default=3.0)
    _add_pipeline_flags(p_bench)

    return parser


def _resolve_seed(cli_seed: int | None, default: int) -> int:
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(ENV_SEED)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _CommandError(2, f"{ENV_SEED} must be an integer, got {env!r}")
    return default


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    if args.command in ("convert", "bench"):
        cfg.invert = args.invert
        cfg.truck_scale = args.truck_scale
        cfg.width_mode = WidthMode(args.width_mode)
        cfg.k = args.k
        cfg.gain = args.gain
        cfg.damping = args.damping
        cfg.heading_clamp = args.heading_clamp
        cfg.lookahead_scale = args.lookahead_scale
        cfg.wheel_scale = args.wheel_scale
        cfg.step_scale = args.step_scale
        cfg.residue_threshold = args.residue_threshold
    if args.command == "convert":
        cfg.input = args.input
        cfg.output = args.out
        cfg.svg = args.svg
        cfg.csv = args.csv
        cfg.debug_stages = args.debug_stages
        cfg.snapshot_interval = args.snapshot_interval
    elif args.command == "synth":
        cfg.spec_path = args.spec
        cfg.image_out = args.image
        cfg.truth_out = args.truth
        cfg.corpus_n = args.corpus
        cfg.out_dir = args.out_dir
        cfg.seed = _resolve_seed(args.seed, 0)
    elif args.command == "eval":
        cfg.truth = args.truth
        cfg.recovered = args.recovered
        cfg.truth_dir = args.truth_dir
        cfg.recovered_dir = args.recovered_dir
        cfg.output = args.out
        cfg.match_threshold_scale = args.match_threshold_scale
    elif args.command == "render":
        cfg.input = args.input
        cfg.output = args.out
        cfg.underlay = args.underlay
    elif args.command == "bench":
        cfg.n_items = args.n
        cfg.seed = _resolve_seed(args.seed, 42)
        cfg.output = args.out
        cfg.dump_dir = args.dump_dir
        cfg.match_threshold_scale = args.match_threshold_scale
    return cfg


_DISPATCH = {
    "convert": cmd_convert,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "render": cmd_render,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        return _DISPATCH[config.command](config)
    except _CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TraceSchemaError, SpecValidationError, EmptySignatureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal invariant breach
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
