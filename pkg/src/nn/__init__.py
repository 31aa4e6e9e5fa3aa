"""A2U Lab nn blocks - layers, batchnorm, parameters, optimizer, checkpoints"""
from .batchnorm import BN_EPS, BN_MOMENTUM, BatchNormState, NormMode, batchnorm2d
from .checkpoint import load_checkpoint, read_model_spec, restore_checkpoint, save_checkpoint
from .layers import Activation, LayerBlock, NormKind, Trace, apply_batchnorm
from .optim import SgdState, StepDecaySchedule, sgd_step
from .registry import (
    InitKind,
    ParamRegistry,
    ParamSpec,
    batchnorm_specs,
    conv_specs,
    count_params,
    init_params,
)

__all__ = [
    "BN_EPS",
    "BN_MOMENTUM",
    "BatchNormState",
    "NormMode",
    "batchnorm2d",
    "load_checkpoint",
    "read_model_spec",
    "restore_checkpoint",
    "save_checkpoint",
    "Activation",
    "LayerBlock",
    "NormKind",
    "Trace",
    "apply_batchnorm",
    "SgdState",
    "StepDecaySchedule",
    "sgd_step",
    "InitKind",
    "ParamRegistry",
    "ParamSpec",
    "batchnorm_specs",
    "conv_specs",
    "count_params",
    "init_params",
]
