"""A2U Lab reconstruction experiment - IDX data, toy encoder-decoder, training and metrics"""
from .compare import COMPARISON_ROWS, CompareResult, CompareRow, compare_upsamplers, select_rows
from .export import (
    CSV_HEADER,
    MetricsCsvWriter,
    dump_reconstructions,
    read_pgm,
    write_kernel_map,
    write_kernel_maps,
    write_pgm,
)
from .idx import DATASETS, IdxDataset, dataset_path, load_idx, resize_to_32, write_idx
from .metrics import ImageMetrics, MetricReport, metrics, psnr, ssim
from .toynet import (
    DEFAULT_ARCHITECTURE,
    DownsamplerKind,
    ToyModel,
    ToyNet,
    ToyNetSpec,
    UpsamplerSpec,
    build_toy_net,
    parse_architecture,
)
from .train import EpochRecord, TrainConfig, TrainResult, evaluate, evaluate_model, load_model, predict, train

__all__ = [
    "COMPARISON_ROWS",
    "CompareResult",
    "CompareRow",
    "compare_upsamplers",
    "select_rows",
    "CSV_HEADER",
    "MetricsCsvWriter",
    "dump_reconstructions",
    "read_pgm",
    "write_kernel_map",
    "write_kernel_maps",
    "write_pgm",
    "DATASETS",
    "IdxDataset",
    "dataset_path",
    "load_idx",
    "resize_to_32",
    "write_idx",
    "ImageMetrics",
    "MetricReport",
    "metrics",
    "psnr",
    "ssim",
    "DEFAULT_ARCHITECTURE",
    "DownsamplerKind",
    "ToyModel",
    "ToyNet",
    "ToyNetSpec",
    "UpsamplerSpec",
    "build_toy_net",
    "parse_architecture",
    "EpochRecord",
    "TrainConfig",
    "TrainResult",
    "evaluate",
    "evaluate_model",
    "load_model",
    "predict",
    "train",
]
