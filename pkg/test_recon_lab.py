"""
A2U Lab - Reconstruction Experiment Tests
IDX parsing, resizing, metrics, the toy encoder-decoder, training and artifacts
"""
import csv
import importlib
import json

import numpy as np
import pytest

from src.errors import CheckpointError, ConfigValidationError, DataIOError, DivergenceError, IdxFormatError, ShapeError
from src.recon import (
    COMPARISON_ROWS,
    CSV_HEADER,
    DownsamplerKind,
    MetricsCsvWriter,
    ToyNetSpec,
    TrainConfig,
    UpsamplerSpec,
    build_toy_net,
    compare_upsamplers,
    dataset_path,
    dump_reconstructions,
    evaluate,
    load_idx,
    load_model,
    metrics,
    parse_architecture,
    read_pgm,
    resize_to_32,
    select_rows,
    train,
    write_idx,
    write_kernel_map,
    write_pgm,
)
from src.observability import RunEventType, RunLogger
from src.tensor import Tensor
from src.upsampling import KernelMap, UpsamplerKind

TINY_ARCH = "C(4)-D2-C(4)-U2-C(1)"


def _images(n: int, side: int = 32, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, 1, side, side)).astype(np.float32)


def _tiny_config(tmp_path, **overrides) -> TrainConfig:
    fields = dict(
        epochs=2,
        batch_size=4,
        decay_epochs=[],
        train_size=8,
        test_size=4,
        output_dir=tmp_path,
        net=ToyNetSpec(architecture=TINY_ARCH),
    )
    fields.update(overrides)
    return TrainConfig.validated(**fields)


# ═══════════════════════════════════════════════════════════════════════════════
# IDX
# ═══════════════════════════════════════════════════════════════════════════════

def test_idx_round_trip(tmp_path):
    pixels = np.random.default_rng(0).integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    path = write_idx(tmp_path / "train-images-idx3-ubyte", pixels)
    data = load_idx(path)
    assert data.count == 3 and data.images.shape == (3, 1, 28, 28)
    np.testing.assert_allclose(data.images[:, 0], pixels / 255.0, rtol=1e-6)
    assert data.subset(2).count == 2
    assert data.resized(side=32).shape == (3, 1, 32, 32)


def test_idx_rejects_wrong_magic(tmp_path):
    path = write_idx(tmp_path / "images", np.zeros((2, 28, 28), dtype=np.uint8))
    raw = bytearray(path.read_bytes())
    raw[:4] = (0x801).to_bytes(4, "big")
    path.write_bytes(bytes(raw))
    with pytest.raises(IdxFormatError):
        load_idx(path)


def test_idx_rejects_truncated_trailing_and_empty(tmp_path):
    path = write_idx(tmp_path / "images", np.zeros((2, 28, 28), dtype=np.uint8))
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(IdxFormatError):
        load_idx(path)
    path.write_bytes(raw + b"\x00")
    with pytest.raises(IdxFormatError):
        load_idx(path)
    path.write_bytes(b"")
    with pytest.raises(IdxFormatError):
        load_idx(path)


def test_idx_missing_file_and_unexpected_dims(tmp_path):
    with pytest.raises(DataIOError):
        load_idx(tmp_path / "absent")
    path = write_idx(tmp_path / "images", np.zeros((1, 20, 20), dtype=np.uint8))
    with pytest.raises(IdxFormatError):
        load_idx(path)
    assert load_idx(path, expected_hw=None).images.shape == (1, 1, 20, 20)


def test_dataset_path_prefers_nested_layout(tmp_path):
    flat = dataset_path(tmp_path, "test", "mnist")
    assert flat == tmp_path / "t10k-images-idx3-ubyte"
    nested = write_idx(tmp_path / "fashion-mnist" / "t10k-images-idx3-ubyte", np.zeros((1, 28, 28), dtype=np.uint8))
    assert dataset_path(tmp_path, "test", "fashion-mnist") == nested
    with pytest.raises(DataIOError):
        dataset_path(tmp_path, "validation")


def test_resize_keeps_constants_and_range():
    const = resize_to_32(np.full((2, 1, 28, 28), 0.4, dtype=np.float32))
    assert const.shape == (2, 1, 32, 32)
    np.testing.assert_allclose(const, 0.4, atol=1e-6)
    noisy = resize_to_32(_images(2, side=28))
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0


# ═══════════════════════════════════════════════════════════════════════════════
# METRICS
# ═══════════════════════════════════════════════════════════════════════════════

def test_metrics_identical_images():
    gt = _images(2)
    report = metrics(gt, gt)
    assert report.psnr == 99.0
    assert report.mse == 0.0 and report.mae == 0.0
    assert report.ssim == pytest.approx(1.0, abs=1e-9)


def test_metrics_constant_offset_closed_forms():
    gt = np.random.default_rng(1).uniform(0.0, 0.9, size=(3, 1, 16, 16))
    report = metrics(gt + 0.1, gt)
    assert report.mae == pytest.approx(0.1, abs=1e-9)
    assert report.mse == pytest.approx(0.1, abs=1e-9)
    assert report.psnr == pytest.approx(20.0, abs=1e-6)
    assert report.count == 3


def test_metrics_psnr_falls_with_noise_and_ssim_is_symmetric():
    rng = np.random.default_rng(2)
    gt = rng.uniform(0.2, 0.8, size=(1, 1, 16, 16))
    small = np.clip(gt + rng.normal(scale=0.01, size=gt.shape), 0, 1)
    large = np.clip(gt + rng.normal(scale=0.1, size=gt.shape), 0, 1)
    assert metrics(small, gt).psnr > metrics(large, gt).psnr
    assert metrics(large, gt).ssim == pytest.approx(metrics(gt, large).ssim, abs=1e-9)


def test_metrics_shape_errors():
    with pytest.raises(ShapeError):
        metrics(_images(2), _images(3))
    with pytest.raises(ShapeError):
        metrics(_images(1, side=8), _images(1, side=8))


# ═══════════════════════════════════════════════════════════════════════════════
# NETWORK
# ═══════════════════════════════════════════════════════════════════════════════

def test_parse_architecture_balance():
    tokens = parse_architecture(TINY_ARCH)
    assert [t.value for t in tokens] == [4, 2, 4, 2, 1]
    for bad in ("C(4)-D2-C(1)", "C(4)-U2-C(1)", "D2-C(4)-U2", "C(4)-X3-C(1)", "C(4)-D2-C(4)-U3-C(1)"):
        with pytest.raises(ConfigValidationError):
            parse_architecture(bad)


def test_network_spec_validation():
    with pytest.raises(ConfigValidationError):
        ToyNetSpec.validated(upsampler=UpsamplerSpec(kind=UpsamplerKind.MAX_UNPOOL), downsampler=DownsamplerKind.STRIDE2_CONV)
    with pytest.raises(ConfigValidationError):
        ToyNetSpec.validated(architecture=TINY_ARCH, input_size=31)
    with pytest.raises(ConfigValidationError):
        ToyNetSpec.validated(upsampler=UpsamplerSpec(kind=UpsamplerKind.BILINEAR), downsampler=DownsamplerKind.PAIRED)
    assert ToyNetSpec(upsampler=UpsamplerSpec(kind=UpsamplerKind.BILINEAR)).resolved_downsampler == DownsamplerKind.STRIDE2_CONV
    assert ToyNetSpec().resolved_downsampler == DownsamplerKind.MAXPOOL
    assert ToyNetSpec(upsampler=UpsamplerSpec(paired=True)).resolved_downsampler == DownsamplerKind.PAIRED


@pytest.mark.parametrize("row", COMPARISON_ROWS, ids=lambda r: r.slug)
def test_every_comparison_row_reconstructs_input_shape(row):
    spec = ToyNetSpec.validated(upsampler=row.upsampler, downsampler=row.downsampler)
    model = build_toy_net(spec, seed=0)
    out = model(_images(2))
    assert out.shape == (2, 1, 32, 32)
    assert model.count_params() > 0


def test_bilinear_network_parameter_count():
    def conv(cin, cout, k):
        return cout * cin * k * k + cout

    widths = [1, 32, 64, 128, 256, 128, 64, 32]
    blocks = sum(conv(a, b, 3) + 2 * b for a, b in zip(widths, widths[1:]))
    expected = blocks + conv(32, 1, 3) + conv(32, 32, 4) + conv(64, 64, 4) + conv(128, 128, 4)
    spec = ToyNetSpec(upsampler=UpsamplerSpec(kind=UpsamplerKind.BILINEAR))
    assert build_toy_net(spec).count_params() == expected


def test_paired_a2u_network_collects_kernel_maps():
    spec = ToyNetSpec.validated(architecture=TINY_ARCH, upsampler=UpsamplerSpec(paired=True))
    model = build_toy_net(spec, seed=1)
    maps = []
    out = model(_images(2), kernel_maps=maps)
    assert out.shape == (2, 1, 32, 32)
    assert [name for name, _ in maps] == ["down0", "up0"]
    assert maps[1][1].kernels.shape == (2, 1, 32, 32)


# ═══════════════════════════════════════════════════════════════════════════════
# TRAINING
# ═══════════════════════════════════════════════════════════════════════════════

def test_training_writes_history_and_checkpoint(tmp_path):
    cfg = _tiny_config(tmp_path / "run")
    result = train(cfg, _images(8), _images(4, seed=1))
    assert [r.epoch for r in result.history] == [1, 2]
    assert all(np.isfinite(r.loss) for r in result.history)
    assert result.final_test is not None and result.final_test.count == 4

    with open(tmp_path / "run" / "history.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [(r["epoch"], r["split"]) for r in rows] == [("1", "test"), ("1", "train"), ("2", "test"), ("2", "train")]
    assert (tmp_path / "run" / "train_config.json").is_file()
    assert (result.checkpoint / "manifest.json").is_file()

    model = load_model(result.checkpoint, expected=cfg.net)
    for name, tensor in result.model.params.items():
        np.testing.assert_array_equal(model.params[name].numpy(), tensor.numpy())
    journal = tmp_path / "eval" / "run_log.jsonl"
    report = evaluate(result.checkpoint, _images(4, seed=1), journal_path=journal)
    assert report.psnr == pytest.approx(result.final_test.psnr, abs=1e-6)
    (event,) = RunLogger("eval", journal).read_events()
    assert event.event_type == RunEventType.EVALUATION_COMPLETED
    assert event.details["images"] == 4
    assert event.details["psnr"] == pytest.approx(report.psnr)


def test_training_is_deterministic_for_a_seed(tmp_path):
    data, test = _images(8), _images(4, seed=1)
    train(_tiny_config(tmp_path / "a", seed=3), data, test)
    train(_tiny_config(tmp_path / "b", seed=3), data, test)
    assert (tmp_path / "a" / "history.csv").read_text() == (tmp_path / "b" / "history.csv").read_text()


def test_zero_learning_rate_leaves_weights_unchanged(tmp_path):
    cfg = _tiny_config(tmp_path, lr=0.0, epochs=1)
    result = train(cfg, _images(8))
    initial = build_toy_net(cfg.net, seed=cfg.seed)
    for name, tensor in initial.params.trainable_items():
        np.testing.assert_array_equal(result.model.params[name].numpy(), tensor.numpy())


def test_decay_epochs_checkpoint_and_lower_lr(tmp_path):
    cfg = _tiny_config(tmp_path, epochs=3, decay_epochs=[2], max_steps=None)
    result = train(cfg, _images(8))
    assert [r.lr for r in result.history] == pytest.approx([0.01, 0.001, 0.001])
    assert [p.name for p in result.checkpoints] == ["epoch_001", "final"]
    events = [e.event_type for e in RunLogger("decay", tmp_path / "run_log.jsonl").read_events()]
    assert RunEventType.LR_DECAYED in events and events[-1] == RunEventType.RUN_COMPLETED


def test_max_steps_stops_early(tmp_path):
    result = train(_tiny_config(tmp_path, epochs=5, max_steps=3), _images(8))
    assert sum(r.steps for r in result.history) == 3
    assert result.history[-1].epoch == 2


def test_non_finite_loss_raises_divergence(tmp_path, monkeypatch):
    monkeypatch.setattr(importlib.import_module("src.recon.train"), "l1_loss", lambda out, target: Tensor(np.array(np.nan)))
    with pytest.raises(DivergenceError):
        train(_tiny_config(tmp_path), _images(8))
    events = (tmp_path / "run_log.jsonl").read_text()
    assert "run_failed" in events


def test_training_config_validation(tmp_path):
    with pytest.raises(ConfigValidationError):
        TrainConfig.validated(epochs=10, decay_epochs=[5, 3])
    with pytest.raises(ConfigValidationError):
        TrainConfig.validated(epochs=10, decay_epochs=[10])
    with pytest.raises(ConfigValidationError):
        TrainConfig.validated(unknown=1)
    with pytest.raises(ShapeError):
        train(_tiny_config(tmp_path), _images(8, side=28))


def test_load_model_rejects_other_network(tmp_path):
    result = train(_tiny_config(tmp_path, epochs=1), _images(8))
    other = ToyNetSpec(architecture="C(8)-D2-C(4)-U2-C(1)")
    with pytest.raises(CheckpointError):
        load_model(result.checkpoint, expected=other)


def test_compare_two_rows(tmp_path):
    cfg = _tiny_config(tmp_path, epochs=1, max_steps=1)
    rows = select_rows(["conv2-bilinear", "maxpool-a2u"])
    results = compare_upsamplers(cfg, _images(8), _images(4, seed=1), rows)
    assert [r.label for r in results] == ["Conv/2-Bilinear", "MaxPool-A2U"]
    assert all(r.report is not None and r.report.count == 4 for r in results)
    assert (tmp_path / "maxpool-a2u" / "history.csv").is_file()
    with pytest.raises(ConfigValidationError):
        select_rows(["no-such-row"])


# ═══════════════════════════════════════════════════════════════════════════════
# ARTIFACTS
# ═══════════════════════════════════════════════════════════════════════════════

def test_pgm_round_trip(tmp_path):
    image = np.random.default_rng(3).integers(0, 256, size=(5, 7)).astype(np.float64) / 255.0
    path = write_pgm(tmp_path / "img.pgm", image)
    np.testing.assert_array_equal(read_pgm(path), np.rint(image * 255).astype(np.uint8))
    with pytest.raises(DataIOError):
        write_pgm(tmp_path / "bad.pgm", np.zeros((2, 3, 3)))


def test_dump_reconstructions_count(tmp_path):
    paths = dump_reconstructions(tmp_path, _images(4), _images(4, seed=1), count=2)
    assert sorted(p.name for p in paths) == ["gt_0000.pgm", "gt_0001.pgm", "recon_0000.pgm", "recon_0001.pgm"]


def test_kernel_map_dump_layout(tmp_path):
    kernels = np.full((1, 9, 4, 4), 1 / 9, dtype=np.float32)
    blob, sidecar = write_kernel_map(tmp_path, "up0", KernelMap(Tensor(kernels), s=3, r=2))
    assert blob.stat().st_size == 4 * kernels.size
    np.testing.assert_array_equal(np.frombuffer(blob.read_bytes(), dtype="<f4").reshape(kernels.shape), kernels)
    meta = json.loads(sidecar.read_text())
    assert meta["shape"] == [1, 9, 4, 4] and meta["stage"] == "up0"


def test_metrics_csv_header(tmp_path):
    writer = MetricsCsvWriter(tmp_path / "m.csv")
    writer.write(1, "train", loss=0.5)
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(CSV_HEADER)
    assert writer.rows()[0]["loss"] == "0.500000"
