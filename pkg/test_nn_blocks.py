"""
A2U Lab - NN Block Tests
Batchnorm statistics, SGD updates, initialization, parameter counting, checkpoints
"""
import json

import numpy as np
import pytest

from src.errors import CheckpointError, ConfigValidationError, GradientError, ShapeError
from src.nn import (
    BN_EPS,
    Activation,
    BatchNormState,
    LayerBlock,
    NormKind,
    NormMode,
    ParamRegistry,
    ParamSpec,
    SgdState,
    StepDecaySchedule,
    batchnorm2d,
    batchnorm_specs,
    conv_specs,
    count_params,
    init_params,
    load_checkpoint,
    read_model_spec,
    restore_checkpoint,
    save_checkpoint,
    sgd_step,
)
from src.tensor import ConvSpec, Tensor, grad_check, hadamard, sum


def _bn_params(c: int, dtype=np.float64):
    return Tensor(np.ones(c), dtype=dtype), Tensor(np.zeros(c), dtype=dtype), BatchNormState.fresh(c, dtype=dtype)


# ═══════════════════════════════════════════════════════════════════════════════
# BATCHNORM
# ═══════════════════════════════════════════════════════════════════════════════

def test_batchnorm_constant_channel_yields_beta():
    rng = np.random.default_rng(0)
    gamma = Tensor(rng.normal(size=3))
    beta = Tensor(rng.normal(size=3), dtype=np.float64)
    x = np.broadcast_to(np.array([2.0, -1.0, 7.0]).reshape(1, 3, 1, 1), (4, 3, 2, 2))
    out = batchnorm2d(Tensor(x), gamma.astype(np.float64), beta, BatchNormState.fresh(3, np.float64), NormMode.TRAIN)
    np.testing.assert_allclose(out.numpy(), np.broadcast_to(beta.numpy().reshape(1, 3, 1, 1), x.shape), atol=1e-12)


def test_batchnorm_two_sample_closed_form():
    gamma, beta, state = _bn_params(1)
    x = Tensor(np.array([-1.0, 1.0]).reshape(2, 1, 1, 1))
    out = batchnorm2d(x, gamma, beta, state, NormMode.TRAIN).numpy().reshape(-1)
    expected = 1.0 / np.sqrt(1.0 + BN_EPS)
    np.testing.assert_allclose(out, [-expected, expected], rtol=1e-12)


def test_batchnorm_running_stats_use_unbiased_variance():
    gamma, beta, state = _bn_params(1)
    x = Tensor(np.array([-1.0, 1.0]).reshape(2, 1, 1, 1))
    batchnorm2d(x, gamma, beta, state, NormMode.TRAIN)
    assert state.running_mean.item() == pytest.approx(0.0)
    # biased variance 1, unbiased 2
    assert state.running_var.item() == pytest.approx(0.9 * 1.0 + 0.1 * 2.0)


def test_batchnorm_eval_is_pure():
    gamma, beta, state = _bn_params(2)
    state.running_mean.assign(np.array([1.0, -1.0]))
    state.running_var.assign(np.array([4.0, 0.25]))
    x = Tensor(np.random.default_rng(1).normal(size=(3, 2, 2, 2)))
    first = batchnorm2d(x, gamma, beta, state, NormMode.EVAL).numpy()
    second = batchnorm2d(x, gamma, beta, state, NormMode.EVAL).numpy()
    np.testing.assert_array_equal(first, second)
    np.testing.assert_array_equal(state.running_mean.numpy(), [1.0, -1.0])
    expected = (x.numpy()[:, 0] - 1.0) / np.sqrt(4.0 + BN_EPS)
    np.testing.assert_allclose(first[:, 0], expected, rtol=1e-12)


def test_batchnorm_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    target = rng.normal(size=(2, 3, 2, 2))

    def loss(x, gamma, beta):
        out = batchnorm2d(x, gamma, beta, BatchNormState.fresh(3, np.float64), NormMode.TRAIN)
        return sum(hadamard(out, Tensor(target)))

    err = grad_check(loss, [rng.normal(size=(2, 3, 2, 2)), rng.normal(size=3) + 2.0, rng.normal(size=3)])
    assert err < 1e-4


def test_batchnorm_rejects_bad_shapes_and_empty_batch():
    gamma, beta, state = _bn_params(2)
    with pytest.raises(ShapeError):
        batchnorm2d(Tensor(np.zeros((1, 3, 2, 2))), gamma, beta, state, NormMode.TRAIN)
    with pytest.raises(ShapeError):
        batchnorm2d(Tensor(np.zeros((0, 2, 2, 2))), gamma, beta, state, NormMode.TRAIN)


# ═══════════════════════════════════════════════════════════════════════════════
# OPTIMIZER
# ═══════════════════════════════════════════════════════════════════════════════

def _registry(value: float) -> ParamRegistry:
    reg = ParamRegistry()
    reg.add("w", Tensor(np.array([value]), dtype=np.float64))
    return reg


def test_sgd_plain_step():
    reg = _registry(1.0)
    sgd_step(reg, {"w": np.array([0.5])}, SgdState(lr=1.0, momentum=0.0))
    assert reg["w"].item() == pytest.approx(0.5)


def test_sgd_momentum_accumulates_velocity():
    reg = _registry(1.0)
    state = SgdState(lr=0.1, momentum=0.9)
    sgd_step(reg, {"w": np.array([1.0])}, state)
    assert reg["w"].item() == pytest.approx(0.9)
    sgd_step(reg, {"w": np.array([1.0])}, state)
    assert reg["w"].item() == pytest.approx(0.9 - 0.1 * 1.9)


def test_sgd_descends_a_quadratic_bowl():
    reg = _registry(5.0)
    state = SgdState(lr=0.1, momentum=0.0)
    losses = []
    for _ in range(20):
        w = reg["w"].item()
        losses.append(w * w)
        sgd_step(reg, {"w": np.array([2.0 * w])}, state)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_sgd_zero_lr_leaves_weights_unchanged():
    reg = _registry(0.123)
    before = reg["w"].numpy()
    sgd_step(reg, {"w": np.array([7.0])}, SgdState(lr=0.0))
    np.testing.assert_array_equal(reg["w"].numpy(), before)


def test_sgd_missing_gradient_and_bad_settings():
    with pytest.raises(GradientError):
        sgd_step(_registry(1.0), {}, SgdState(lr=0.1))
    with pytest.raises(ConfigValidationError):
        SgdState(lr=0.1, momentum=1.0)


def test_step_decay_schedule():
    schedule = StepDecaySchedule(base_lr=0.01, decay_epochs=(20, 26), factor=0.1)
    assert schedule.lr_at(1) == pytest.approx(0.01)
    assert schedule.lr_at(19) == pytest.approx(0.01)
    assert schedule.lr_at(20) == pytest.approx(0.001)
    assert schedule.lr_at(30) == pytest.approx(0.0001)
    assert schedule.is_decay_epoch(26) and not schedule.is_decay_epoch(25)


# ═══════════════════════════════════════════════════════════════════════════════
# PARAMETERS
# ═══════════════════════════════════════════════════════════════════════════════

def test_init_is_seed_deterministic():
    specs = conv_specs("c", ConvSpec.square(3, 4, 3))
    a, b, c = init_params(specs, 7), init_params(specs, 7), init_params(specs, 8)
    np.testing.assert_array_equal(a["c.weight"].numpy(), b["c.weight"].numpy())
    assert not np.array_equal(a["c.weight"].numpy(), c["c.weight"].numpy())
    np.testing.assert_array_equal(a["c.bias"].numpy(), np.zeros(4))


def test_init_variance_matches_fan_in():
    reg = init_params([ParamSpec.weight("w", (1000, 1000), fan_in=9)], seed=0, dtype=np.float64)
    values = reg["w"].numpy()
    assert np.abs(values).max() <= np.sqrt(6.0 / 9)
    assert values.var() == pytest.approx(2.0 / 9, rel=0.05)


def test_count_params_conv_and_buffers():
    assert count_params(init_params(conv_specs("c", ConvSpec.square(4, 8, 3)), 0)) == 296
    assert count_params(ParamRegistry()) == 0
    # running statistics are buffers
    assert count_params(init_params(batchnorm_specs("bn", 4), 0)) == 8


def test_registry_rejects_duplicates_and_unknown_names():
    reg = _registry(1.0)
    with pytest.raises(ConfigValidationError):
        reg.add("w", Tensor([0.0]))
    with pytest.raises(ConfigValidationError):
        reg["missing"]


def test_layer_block_forward_shape_and_eval_purity():
    block = LayerBlock("b0", ConvSpec.square(2, 4, 3, padding=1))
    params = init_params(block.param_specs(), 3, dtype=np.float64)
    x = Tensor(np.random.default_rng(3).normal(size=(2, 2, 5, 5)))
    out = block.forward(params, x, training=True)
    assert out.shape == (2, 4, 5, 5)
    assert (out.numpy() >= 0).all()
    stats = params["b0.bn.running_mean"].numpy()
    first = block.forward(params, x).numpy()
    np.testing.assert_array_equal(block.forward(params, x).numpy(), first)
    np.testing.assert_array_equal(params["b0.bn.running_mean"].numpy(), stats)


def test_layer_block_without_norm_or_activation():
    block = LayerBlock("out", ConvSpec.square(2, 1, 1), norm=NormKind.NONE, activation=Activation.NONE)
    assert [s.name for s in block.param_specs()] == ["out.conv.weight", "out.conv.bias"]


# ═══════════════════════════════════════════════════════════════════════════════
# CHECKPOINTS
# ═══════════════════════════════════════════════════════════════════════════════

def _specs():
    return conv_specs("c", ConvSpec.square(2, 3, 3)) + batchnorm_specs("bn", 3)


def test_checkpoint_round_trip(tmp_path):
    source = init_params(_specs(), 1)
    source["bn.running_var"].assign(np.array([2.0, 3.0, 4.0]))
    save_checkpoint(tmp_path / "ckpt", source, model={"arch": "C(3)"})
    target = restore_checkpoint(tmp_path / "ckpt", init_params(_specs(), 2))
    for name, tensor in source.items():
        np.testing.assert_array_equal(target[name].numpy(), tensor.numpy())
    assert read_model_spec(tmp_path / "ckpt") == {"arch": "C(3)"}


def test_checkpoint_missing_and_corrupt(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nowhere")

    directory = save_checkpoint(tmp_path / "ckpt", init_params(_specs(), 1))
    manifest_path = directory / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["c.weight"]["offset"] = 10_000_000
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError):
        load_checkpoint(directory)

    manifest_path.write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(directory)


def test_checkpoint_rejects_mismatched_model(tmp_path):
    save_checkpoint(tmp_path / "ckpt", init_params(_specs(), 1))
    other = init_params(conv_specs("c", ConvSpec.square(2, 5, 3)), 0)
    with pytest.raises(CheckpointError):
        restore_checkpoint(tmp_path / "ckpt", other)
