"""
Reconstruction training and evaluation
SGD on the ℓ1 reconstruction loss with a step-decay schedule; inference-mode evaluation
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional
import json

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
import structlog

from ..errors import CheckpointError, ConfigValidationError, DivergenceError, NonFiniteError, ShapeError
from ..nn import SgdState, StepDecaySchedule, read_model_spec, restore_checkpoint, save_checkpoint, sgd_step
from ..observability import RunEventType, RunLogger, TrainingMetricsCollector
from ..tensor import Tape, Tensor, backward, l1_loss, no_tape
from .export import MetricsCsvWriter
from .metrics import MetricReport, metrics
from .toynet import ToyModel, ToyNetSpec, build_toy_net

logger = structlog.get_logger()

HISTORY_FILE = "history.csv"
RUN_LOG_FILE = "run_log.jsonl"
CONFIG_FILE = "train_config.json"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "final"
FULL_SCALE = {"epochs": 100, "decay_epochs": [50, 70, 85], "train_size": 60_000, "test_size": 10_000}


class TrainConfig(BaseModel):
    """
    Training recipe. Epochs are numbered from 1; the learning rate is multiplied
    by decay_factor when an epoch listed in decay_epochs begins.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=100, ge=1)
    lr: float = Field(default=0.01, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    decay_epochs: list[int] = Field(default_factory=lambda: [20, 26])
    decay_factor: float = Field(default=0.1, gt=0.0, le=1.0)
    seed: int = 0
    train_size: Optional[int] = Field(default=10_000, ge=1)
    test_size: Optional[int] = Field(default=1_000, ge=1)
    metric_every: int = Field(default=1, ge=1)
    output_dir: Path = Path("./runs")
    dataset: str = "mnist"
    max_steps: Optional[int] = Field(default=None, ge=1)
    threads: int = Field(default=1, ge=1)
    eval_batch_size: int = Field(default=500, ge=1)
    net: ToyNetSpec = Field(default_factory=ToyNetSpec)

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        decays = self.decay_epochs
        if any(b <= a for a, b in zip(decays, decays[1:])):
            raise ValueError(f"decay epochs {decays} must be strictly increasing")
        if decays and (decays[0] < 1 or decays[-1] >= self.epochs):
            raise ValueError(f"decay epochs {decays} must lie in [1, {self.epochs})")
        return self

    @classmethod
    def validated(cls, **fields: Any) -> "TrainConfig":
        try:
            return cls(**fields)
        except ValidationError as exc:
            raise ConfigValidationError(f"invalid training config: {exc.errors()[0]['msg']}") from exc

    @classmethod
    def full_scale(cls, **overrides: Any) -> "TrainConfig":
        """100 epochs, decays at 50/70/85, the full 60k/10k split."""
        fields: dict[str, Any] = {**FULL_SCALE, **overrides}
        return cls.validated(**fields)

    @property
    def schedule(self) -> StepDecaySchedule:
        return StepDecaySchedule(base_lr=self.lr, decay_epochs=tuple(self.decay_epochs), factor=self.decay_factor)


class EpochRecord(BaseModel):
    epoch: int
    lr: float
    steps: int
    loss: float
    test: Optional[MetricReport] = None


@dataclass
class TrainResult:
    model: ToyModel
    checkpoint: Path
    history: list[EpochRecord] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1].loss

    @property
    def final_test(self) -> Optional[MetricReport]:
        for record in reversed(self.history):
            if record.test is not None:
                return record.test
        return None


def _check_images(images: np.ndarray, side: int, what: str) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim != 4 or arr.shape[1] != 1 or arr.shape[2:] != (side, side):
        raise ShapeError(f"{what} images must be [N,1,{side},{side}], got {arr.shape}")
    if arr.shape[0] == 0:
        raise ShapeError(f"{what} set is empty")
    return arr


def model_metadata(spec: ToyNetSpec, **extra: Any) -> dict[str, Any]:
    return {"net": spec.model_dump(mode="json"), **extra}


def train(
    cfg: TrainConfig,
    train_images: np.ndarray,
    test_images: Optional[np.ndarray] = None,
    run_name: str = "train",
) -> TrainResult:
    """
    Train a toy net to reproduce its input.

    Args:
        cfg: Training recipe including the network spec
        train_images: [N,1,S,S] inputs in [0, 1]; also the reconstruction target
        test_images: Optional held-out set evaluated every metric_every epochs
        run_name: Tag stamped on journal events

    Returns:
        TrainResult with the trained model, history and final checkpoint path

    Raises:
        DivergenceError: the loss (or any op on the way) became non-finite
    """
    side = cfg.net.input_size
    data = _check_images(train_images, side, "training")
    if cfg.train_size is not None:
        data = data[: cfg.train_size]
    test = None
    if test_images is not None:
        test = _check_images(test_images, side, "test")
        if cfg.test_size is not None:
            test = test[: cfg.test_size]

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_FILE).write_text(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
    history_csv = MetricsCsvWriter(out_dir / HISTORY_FILE)
    journal = RunLogger(run_name, out_dir / RUN_LOG_FILE)
    collector = TrainingMetricsCollector(run_name)

    model = build_toy_net(cfg.net, seed=cfg.seed)
    schedule = cfg.schedule
    sgd = SgdState(lr=schedule.lr_at(1), momentum=cfg.momentum)
    rng = np.random.default_rng(cfg.seed)
    metadata = dict(dataset=cfg.dataset, seed=cfg.seed)

    journal.log(
        RunEventType.RUN_STARTED,
        upsampler=cfg.net.upsampler.label,
        params=model.count_params(),
        train_images=int(data.shape[0]),
        test_images=0 if test is None else int(test.shape[0]),
        epochs=cfg.epochs,
    )

    result = TrainResult(model=model, checkpoint=out_dir / CHECKPOINT_DIR / FINAL_CHECKPOINT)
    total_steps = 0
    n = data.shape[0]
    try:
        for epoch in range(1, cfg.epochs + 1):
            lr = schedule.lr_at(epoch)
            if schedule.is_decay_epoch(epoch):
                journal.log(RunEventType.LR_DECAYED, epoch=epoch, lr=lr, previous_lr=sgd.lr)
            sgd.lr = lr
            collector.start_epoch(epoch, lr)

            order = rng.permutation(n)
            loss_sum = 0.0
            steps = 0
            for start in range(0, n, cfg.batch_size):
                batch = data[order[start:start + cfg.batch_size]]
                loss_sum += _train_step(model, batch, sgd, epoch, total_steps)
                steps += 1
                total_steps += 1
                collector.record_step(epoch, batch.shape[0])
                if cfg.max_steps is not None and total_steps >= cfg.max_steps:
                    break

            mean_loss = loss_sum / steps
            stop = cfg.max_steps is not None and total_steps >= cfg.max_steps
            last = stop or epoch == cfg.epochs
            collector.end_epoch(epoch, mean_loss)

            report = None
            if test is not None and (epoch % cfg.metric_every == 0 or last):
                with collector.measure_latency("evaluation"):
                    report = evaluate_model(model, test, batch_size=cfg.eval_batch_size, threads=cfg.threads)
                history_csv.write(epoch, "test", report)
            history_csv.write(epoch, "train", loss=mean_loss)
            result.history.append(EpochRecord(epoch=epoch, lr=lr, steps=steps, loss=mean_loss, test=report))
            journal.log(
                RunEventType.EPOCH_COMPLETED,
                epoch=epoch,
                loss=round(mean_loss, 6),
                **({"psnr": round(report.psnr, 3), "ssim": round(report.ssim, 4)} if report else {}),
            )

            if not last and schedule.is_decay_epoch(epoch + 1):
                path = save_checkpoint(out_dir / CHECKPOINT_DIR / f"epoch_{epoch:03d}", model.params, model_metadata(cfg.net, epoch=epoch, **metadata))
                result.checkpoints.append(path)
                journal.log(RunEventType.CHECKPOINT_WRITTEN, epoch=epoch, path=str(path))
            if stop:
                logger.info("max_steps_reached", steps=total_steps, epoch=epoch)
                break
    except (DivergenceError, NonFiniteError) as exc:
        journal.log(RunEventType.RUN_FAILED, outcome="failure", error=type(exc).__name__, message=exc.message)
        if isinstance(exc, DivergenceError):
            raise
        raise DivergenceError(f"training diverged: {exc.message}", step=total_steps) from exc

    path = save_checkpoint(result.checkpoint, model.params, model_metadata(cfg.net, epoch=result.history[-1].epoch, **metadata))
    result.checkpoints.append(path)
    journal.log(RunEventType.CHECKPOINT_WRITTEN, epoch=result.history[-1].epoch, path=str(path))
    journal.log(RunEventType.RUN_COMPLETED, steps=total_steps, final_loss=round(result.final_loss, 6), summary=collector.get_summary())
    return result


def _train_step(model: ToyModel, batch: np.ndarray, sgd: SgdState, epoch: int, step: int) -> float:
    x = Tensor(batch, dtype=model.dtype)
    with Tape() as tape:
        out = model(x, training=True)
        loss = l1_loss(out, x)
    value = float(loss.item())
    if not np.isfinite(value):
        raise DivergenceError(f"loss became {value} at epoch {epoch}, step {step}", epoch=epoch, step=step)
    backward(tape, loss)
    sgd_step(model.params, model.params.gradients(), sgd)
    model.params.zero_grad()
    return value


# ═══════════════════════════════════════════════════════════════════════════════
# EVALUATION
# ═══════════════════════════════════════════════════════════════════════════════

def predict(model: ToyModel, images: np.ndarray, batch_size: int = 500, threads: int = 1) -> np.ndarray:
    """Inference-mode reconstructions clipped to [0, 1], in input order."""
    batches = [images[i:i + batch_size] for i in range(0, images.shape[0], batch_size)]

    def run(batch: np.ndarray) -> np.ndarray:
        with no_tape():
            return model(batch, training=False).numpy()

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, batches))
    else:
        outputs = [run(b) for b in batches]
    return np.clip(np.concatenate(outputs, axis=0), 0.0, 1.0)


def evaluate_model(
    model: ToyModel,
    images: np.ndarray,
    batch_size: int = 500,
    threads: int = 1,
    keep_per_image: bool = False,
) -> MetricReport:
    images = _check_images(images, model.spec.input_size, "evaluation")
    preds = predict(model, images, batch_size=batch_size, threads=threads)
    return metrics(preds, images, keep_per_image=keep_per_image)


def load_model(checkpoint_dir: Path, expected: Optional[ToyNetSpec] = None) -> ToyModel:
    """
    Rebuild the network recorded next to a checkpoint and load its weights.

    Raises:
        CheckpointError: no model spec, unreadable spec, or a spec different from `expected`
    """
    recorded = read_model_spec(checkpoint_dir)
    if recorded is None or "net" not in recorded:
        raise CheckpointError(f"{checkpoint_dir}: no model spec recorded with the checkpoint")
    try:
        spec = ToyNetSpec.model_validate(recorded["net"])
    except ValidationError as exc:
        raise CheckpointError(f"{checkpoint_dir}: invalid model spec: {exc.errors()[0]['msg']}") from exc
    if expected is not None and expected != spec:
        raise CheckpointError(
            "checkpoint was trained with a different network",
            checkpoint=spec.upsampler.label,
            requested=expected.upsampler.label,
        )
    model = build_toy_net(spec, seed=0)
    restore_checkpoint(checkpoint_dir, model.params)
    return model


def evaluate(
    checkpoint_dir: Path,
    images: np.ndarray,
    expected: Optional[ToyNetSpec] = None,
    batch_size: int = 500,
    threads: int = 1,
    journal_path: Optional[Path] = None,
) -> MetricReport:
    model = load_model(checkpoint_dir, expected)
    report = evaluate_model(model, images, batch_size=batch_size, threads=threads)
    RunLogger(model.spec.upsampler.label, journal_path).log(
        RunEventType.EVALUATION_COMPLETED, checkpoint=str(checkpoint_dir), images=report.count, **report.as_row()
    )
    return report
