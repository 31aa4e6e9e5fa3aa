"""
CLI command handlers
Each handler takes the parsed argparse namespace and returns an exit code;
library errors propagate to main(), which maps them to exit codes.
"""
import argparse
import csv
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import structlog

from ..a2u import A2UConfig, A2UParams, a2u_param_count
from ..errors import DataIOError, GradCheckFailure, ParamCountMismatch
from ..nn import count_params
from ..observability import RunEventType, RunLogger
from ..recon import (
    CSV_HEADER,
    compare_upsamplers,
    dump_reconstructions,
    load_idx,
    load_model,
    metrics,
    predict,
    read_pgm,
    resize_to_32,
    select_rows,
    train,
    write_kernel_maps,
)
from ..recon.export import csv_row
from ..recon.train import RUN_LOG_FILE
from ..visualizer import LabVisualizer
from .config import RunConfig, build_run_config
from .gradcheck_suites import A2U_VARIANTS, TOLERANCE, GradScope, cases_for, run_cases

logger = structlog.get_logger()


def _run_config(args: argparse.Namespace) -> RunConfig:
    return build_run_config(getattr(args, "config", None), vars(args))


def _stdout_csv(rows: list[list[str]]) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerows(rows)
    sys.stdout.flush()


def _load_split(run: RunConfig, split: str, limit: Optional[int], required: bool = True) -> Optional[np.ndarray]:
    """IDX images for a split, subset and resized to the network input size."""
    explicit = run.data.train_images if split == "train" else run.data.test_images
    try:
        path = run.data.resolve(split, run.train.dataset)
    except DataIOError:
        if required:
            raise
        return None
    if not path.is_file() and not required and explicit is None:
        logger.warning("split_unavailable", split=split, path=str(path))
        return None
    dataset = load_idx(path, split=split, dataset=run.train.dataset).subset(limit)
    return dataset.resized(side=run.train.net.input_size)


# ═══════════════════════════════════════════════════════════════════════════════
# TRAIN / EVAL
# ═══════════════════════════════════════════════════════════════════════════════

def cmd_train(args: argparse.Namespace) -> int:
    run = _run_config(args)
    viz = LabVisualizer()
    train_images = _load_split(run, "train", run.train.train_size)
    test_images = _load_split(run, "test", run.train.test_size, required=False)

    logger.info(
        "command_train",
        upsampler=run.train.net.upsampler.label,
        epochs=run.train.epochs,
        seed=run.train.seed,
        output_dir=str(run.train.output_dir),
    )
    result = train(run.train, train_images, test_images, run_name=run.train.net.upsampler.label)
    viz.print_history(result.history)
    if result.final_test is not None:
        viz.print_metrics(result.final_test)
    viz.print_success(f"checkpoint written to {result.checkpoint}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run = _run_config(args)
    expected = run.train.net if (args.config or args.upsampler) else None
    model = load_model(Path(args.checkpoint), expected)
    images = _load_split(run, "test", run.train.test_size)

    preds = predict(model, images, batch_size=run.train.eval_batch_size, threads=run.train.threads)
    report = metrics(preds, images)
    _stdout_csv([csv_row(None, "test", report, None)])
    LabVisualizer().print_metrics(report)
    journal = RunLogger(model.spec.upsampler.label, Path(run.train.output_dir) / RUN_LOG_FILE)
    journal.log(RunEventType.EVALUATION_COMPLETED, checkpoint=str(args.checkpoint), images=report.count, **report.as_row())

    if args.dump_images:
        out_dir = Path(run.train.output_dir) / "reconstructions"
        dump_reconstructions(out_dir, preds, images, count=args.dump_images)
    return 0


# ═══════════════════════════════════════════════════════════════════════════════
# VERIFICATION
# ═══════════════════════════════════════════════════════════════════════════════

def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_cases(cases_for(GradScope(args.scope), seed=args.seed or 0))
    _stdout_csv([[r.name, f"{r.error:.3e}"] for r in results])
    LabVisualizer().print_gradcheck([(r.name, r.error) for r in results], TOLERANCE)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise GradCheckFailure(f"{len(failed)} gradient check(s) above {TOLERANCE:g}", cases=failed)
    logger.info("gradcheck_passed", scope=args.scope, cases=len(results))
    return 0


def params_config(args: argparse.Namespace, variant: Optional[str] = None) -> A2UConfig:
    if variant is None:
        parts = [args.a2u_mode or "static"]
        if args.a2u_pw:
            parts.append("pw")
        parts.append(args.a2u_channel or "cw")
        if args.paired_down:
            parts.append("d")
        variant = "-".join(parts)
    overrides = {"k_en": args.k_en or 5, "s_u": args.s_u, "rank": args.rank}
    if args.a2u_norm:
        overrides["normalization"] = args.a2u_norm
    return A2UConfig.from_variant(variant, **overrides)


def cmd_params(args: argparse.Namespace) -> int:
    """Closed-form vs instantiated A2U parameter counts."""
    configs = [params_config(args, v) for v in A2U_VARIANTS] if args.sweep else [params_config(args)]
    rows = []
    for cfg in configs:
        _, registry = A2UParams.initialize(cfg, args.channels)
        rows.append({"variant": cfg.variant, "formula": a2u_param_count(cfg, args.channels), "instantiated": count_params(registry)})

    _stdout_csv([["variant", "formula", "instantiated"]] + [[r["variant"], str(r["formula"]), str(r["instantiated"])] for r in rows])
    LabVisualizer().print_param_counts(rows, args.channels)
    mismatched = [r["variant"] for r in rows if r["formula"] != r["instantiated"]]
    if mismatched:
        raise ParamCountMismatch("parameter count differs from the closed form", variants=mismatched)
    return 0


# ═══════════════════════════════════════════════════════════════════════════════
# KERNELS / COMPARISON
# ═══════════════════════════════════════════════════════════════════════════════

def _dump_input(args: argparse.Namespace, run: RunConfig, side: int) -> np.ndarray:
    if args.input:
        image = read_pgm(Path(args.input)).astype(np.float32) / 255.0
        return resize_to_32(image[None, None], side=side)
    images = _load_split(run, "test", args.index + 1)
    if images.shape[0] <= args.index:
        raise DataIOError(f"test set has {images.shape[0]} images, index {args.index} requested")
    return images[args.index:args.index + 1]


def cmd_dump_kernels(args: argparse.Namespace) -> int:
    run = _run_config(args)
    model = load_model(Path(args.checkpoint))
    x = _dump_input(args, run, model.spec.input_size)

    maps = []
    model(x, training=False, kernel_maps=maps)
    if not maps:
        logger.warning("no_kernel_maps", upsampler=model.spec.upsampler.label)
    out_dir = Path(run.train.output_dir) / "kernels"
    stats = write_kernel_maps(out_dir, maps)
    LabVisualizer().print_kernel_stats(stats)
    _stdout_csv([[stage, str(out_dir / f"{stage}.bin")] for stage in stats])
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    run = _run_config(args)
    viz = LabVisualizer()
    viz.print_banner()
    train_images = _load_split(run, "train", run.train.train_size)
    test_images = _load_split(run, "test", run.train.test_size)
    results = compare_upsamplers(run.train, train_images, test_images, select_rows(args.rows))

    header = ["architecture", *CSV_HEADER[2:6], "params"]
    rows = []
    for r in results:
        metric_cells = csv_row(None, "", r.report, None)[2:6]
        rows.append([r.label, *metric_cells, str(r.params)])
    out = Path(run.train.output_dir) / "comparison.csv"
    with open(out, "w", newline="", encoding="utf-8") as f:
        csv.writer(f, lineterminator="\n").writerows([header] + rows)
    _stdout_csv([header] + rows)
    viz.print_separator()
    viz.print_comparison(results)
    return 0
