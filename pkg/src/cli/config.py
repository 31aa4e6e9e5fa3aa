"""
Run configuration for the CLI
Layers, lowest first: built-in defaults, environment, --full-scale recipe, JSON file, flags
"""
import json
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..a2u import A2UConfig
from ..errors import ConfigValidationError, DataIOError
from ..recon import TrainConfig, dataset_path
from ..recon.train import FULL_SCALE
from ..settings import get_settings
from ..upsampling import UpsamplerKind


class DataPaths(BaseModel):
    """Where the IDX files live; explicit file paths win over the directory."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    dataset_dir: Optional[Path] = None
    train_images: Optional[Path] = None
    test_images: Optional[Path] = None

    def resolve(self, split: str, dataset: str) -> Path:
        explicit = self.train_images if split == "train" else self.test_images
        if explicit is not None:
            return explicit
        if self.dataset_dir is None:
            raise DataIOError(f"no {split} images given (use --dataset-dir or --{split}-images)")
        return dataset_path(self.dataset_dir, split, dataset)


class RunConfig(BaseModel):
    """Everything a command needs, validated before any compute."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataPaths = Field(default_factory=DataPaths)
    full_scale: bool = False


def deep_merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config_file(path: Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"config file not found: {path}", path=str(path))
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(raw, dict):
        raise ConfigValidationError(f"{path}: top level must be a JSON object")
    return raw


def _environment_layer() -> dict[str, Any]:
    settings = get_settings()
    return {
        "train": {"output_dir": str(settings.output_dir), "threads": settings.threads},
        "data": {"dataset_dir": str(settings.data_dir)},
    }


def _upsampler_layer(flags: dict[str, Any], current: dict[str, Any]) -> dict[str, Any]:
    """Map the upsampler flags onto train.net.upsampler, seeding A2U settings from the toy preset."""
    kind = flags.get("upsampler") or current.get("kind") or UpsamplerKind.A2U.value
    layer: dict[str, Any] = {}
    if flags.get("upsampler"):
        layer["kind"] = flags["upsampler"]
    if flags.get("paired_down"):
        layer["paired"] = True

    a2u_flags = {
        "mode": flags.get("a2u_mode"),
        "channel": flags.get("a2u_channel"),
        "pointwise": True if flags.get("a2u_pw") else None,
        "normalization": flags.get("a2u_norm"),
    }
    if kind == UpsamplerKind.A2U.value:
        a2u_flags["k_en"] = flags.get("k_en")
        a2u_flags["s_u"] = flags.get("k_up")
    else:
        if flags.get("k_en") is not None:
            layer["k_enc"] = flags["k_en"]
        if flags.get("k_up") is not None:
            layer["k_up"] = flags["k_up"]
    a2u_flags = {k: v for k, v in a2u_flags.items() if v is not None}
    if a2u_flags:
        if kind != UpsamplerKind.A2U.value:
            raise ConfigValidationError(f"--a2u-* flags given for upsampler {kind!r}")
        layer["a2u"] = deep_merge(current.get("a2u") or A2UConfig.toy().to_json_dict(), a2u_flags)
    return layer


def flag_layer(flags: dict[str, Any], file_upsampler: dict[str, Any]) -> dict[str, Any]:
    """Nested overrides from parsed flags; None means the flag was not given."""
    train: dict[str, Any] = {}
    for flag, key in (
        ("seed", "seed"),
        ("epochs", "epochs"),
        ("max_steps", "max_steps"),
        ("threads", "threads"),
        ("out", "output_dir"),
        ("dataset", "dataset"),
    ):
        if flags.get(flag) is not None:
            train[key] = str(flags[flag]) if isinstance(flags[flag], Path) else flags[flag]
    upsampler = _upsampler_layer(flags, file_upsampler)
    if upsampler:
        train["net"] = {"upsampler": upsampler}

    data = {
        key: str(flags[key])
        for key in ("dataset_dir", "train_images", "test_images")
        if flags.get(key) is not None
    }
    layer: dict[str, Any] = {}
    if train:
        layer["train"] = train
    if data:
        layer["data"] = data
    if flags.get("full_scale"):
        layer["full_scale"] = True
    return layer


def build_run_config(config_path: Optional[Path] = None, flags: Optional[dict[str, Any]] = None) -> RunConfig:
    """
    Merge all configuration layers and validate once.

    Raises:
        ConfigValidationError: unknown keys or invalid values in any layer
        DataIOError: the config file is missing
    """
    flags = flags or {}
    file_layer = load_config_file(config_path) if config_path else {}
    file_upsampler = file_layer.get("train", {}).get("net", {}).get("upsampler", {})

    merged = _environment_layer()
    if flags.get("full_scale") or file_layer.get("full_scale"):
        merged = deep_merge(merged, {"train": dict(FULL_SCALE)})
    merged = deep_merge(merged, file_layer)
    merged = deep_merge(merged, flag_layer(flags, file_upsampler))
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        error = exc.errors()[0]
        location = ".".join(str(p) for p in error["loc"])
        raise ConfigValidationError(f"invalid configuration at {location or '<root>'}: {error['msg']}") from exc
