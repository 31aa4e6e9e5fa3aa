"""
A2U Lab - Upsampler Tests
Kernel-map application, fixed resampling and the learned reference upsamplers
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.errors import ConfigValidationError, ShapeError
from src.nn import init_params
from src.tensor import Tensor, max_pool_2x2, nearest_upsample, softmax
from src.upsampling import (
    CarafeUpsampler,
    CarafeWeights,
    DeconvUpsampler,
    Direction,
    FixedKind,
    FixedUpsampler,
    Guidance,
    IndexNetUpsampler,
    IndexNetWeights,
    KernelMap,
    MaxUnpoolUpsampler,
    PixelShuffleUpsampler,
    apply_kernel_map,
    bilinear_kernel_weights,
    carafe_generate,
    deconv_upsample,
    indexnet_generate,
    pixelshuffle_upsample,
    upsample_fixed,
)


def _t(arr) -> Tensor:
    return Tensor(np.asarray(arr, dtype=np.float64))


def _random_kmap(rng, n, s, r, h, w, direction=Direction.UP) -> KernelMap:
    logits = rng.normal(size=(n, s * s, h, w))
    return KernelMap(softmax(_t(logits), axis=1), s=s, r=r, direction=direction)


# ═══════════════════════════════════════════════════════════════════════════════
# KERNEL APPLICATION
# ═══════════════════════════════════════════════════════════════════════════════

def test_unit_kernels_reproduce_nearest_upsampling():
    x = np.random.default_rng(0).normal(size=(2, 3, 4, 5))
    kmap = KernelMap(_t(np.ones((2, 1, 8, 10))), s=1, r=2)
    np.testing.assert_allclose(apply_kernel_map(_t(x), kmap).numpy(), nearest_upsample(_t(x), 2).numpy())


def test_centre_one_hot_equals_unit_kernel():
    x = np.random.default_rng(1).normal(size=(1, 2, 4, 4))
    kernels = np.zeros((1, 9, 8, 8))
    kernels[:, 4] = 1.0
    wide = apply_kernel_map(_t(x), KernelMap(_t(kernels), s=3, r=2)).numpy()
    narrow = apply_kernel_map(_t(x), KernelMap(_t(np.ones((1, 1, 8, 8))), s=1, r=2)).numpy()
    np.testing.assert_allclose(wide, narrow)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), value=st.floats(-5, 5))
def test_normalized_kernels_preserve_constants_away_from_borders(seed, value):
    rng = np.random.default_rng(seed)
    source = _t(np.full((1, 2, 4, 4), value))
    out = apply_kernel_map(source, _random_kmap(rng, 1, 3, 2, 8, 8)).numpy()
    # output rows/cols 2..5 read windows fully inside the 4×4 source
    np.testing.assert_allclose(out[:, :, 2:6, 2:6], value, atol=1e-10)


def test_border_windows_lose_the_mass_on_padding():
    uniform = KernelMap(_t(np.full((1, 9, 8, 8), 1 / 9)), s=3, r=2)
    out = apply_kernel_map(_t(np.ones((1, 1, 4, 4))), uniform).numpy()[0, 0]
    assert out[0, 0] == pytest.approx(4 / 9)
    assert out[0, 4] == pytest.approx(6 / 9)
    assert out[7, 7] == pytest.approx(4 / 9)
    np.testing.assert_allclose(out[2:6, 2:6], 1.0, atol=1e-12)


def test_apply_is_bilinear_in_source_and_kernels():
    rng = np.random.default_rng(2)
    x1, x2 = rng.normal(size=(2, 1, 2, 3, 3))
    k1, k2 = rng.normal(size=(2, 1, 9, 6, 6))

    def apply(x, k):
        return apply_kernel_map(_t(x), KernelMap(_t(k), s=3, r=2, normalized=False)).numpy()

    np.testing.assert_allclose(apply(2 * x1 - 3 * x2, k1), 2 * apply(x1, k1) - 3 * apply(x2, k1), atol=1e-10)
    np.testing.assert_allclose(apply(x1, 0.5 * k1 + k2), 0.5 * apply(x1, k1) + apply(x1, k2), atol=1e-10)


def test_uniform_down_kernels_are_average_pooling():
    x = np.random.default_rng(3).normal(size=(1, 2, 4, 6))
    kmap = KernelMap(_t(np.full((1, 4, 2, 3), 0.25)), s=2, r=2, direction=Direction.DOWN)
    expected = x.reshape(1, 2, 2, 2, 3, 2).mean(axis=(3, 5))
    np.testing.assert_allclose(apply_kernel_map(_t(x), kmap).numpy(), expected, atol=1e-12)


def test_down_kernels_need_even_side_difference():
    kmap = KernelMap(_t(np.full((1, 9, 2, 2), 1 / 9)), s=3, r=2, direction=Direction.DOWN)
    with pytest.raises(ShapeError):
        apply_kernel_map(_t(np.zeros((1, 1, 4, 4))), kmap)


def test_kernel_map_shape_and_normalization_checks():
    with pytest.raises(ShapeError):
        KernelMap(_t(np.ones((1, 4, 4, 4))), s=3, r=2)
    bad = KernelMap(_t(np.full((1, 9, 4, 4), 0.5)), s=3, r=2)
    with pytest.raises(ShapeError):
        apply_kernel_map(_t(np.zeros((1, 1, 2, 2))), bad)
    wrong_size = KernelMap(_t(np.ones((1, 1, 6, 6))), s=1, r=2)
    with pytest.raises(ShapeError):
        apply_kernel_map(_t(np.zeros((1, 1, 2, 2))), wrong_size)


def test_kernel_map_sidecar_and_stats():
    kernels = np.zeros((1, 4, 2, 2))
    kernels[:, 0] = 1.0
    kmap = KernelMap(_t(kernels), s=2, r=2)
    assert kmap.sidecar()["shape"] == [1, 4, 2, 2]
    assert kmap.sidecar()["direction"] == "up"
    stats = kmap.stats()
    assert stats["min"] == 0.0 and stats["max"] == 1.0
    assert stats["mean_spread"] == pytest.approx(1.0)


# ═══════════════════════════════════════════════════════════════════════════════
# FIXED UPSAMPLING
# ═══════════════════════════════════════════════════════════════════════════════

def test_bilinear_kernel_weights():
    np.testing.assert_allclose(bilinear_kernel_weights(0.0, 0.0), [1, 0, 0, 0])
    np.testing.assert_allclose(bilinear_kernel_weights(0.5, 0.5), [0.25] * 4)
    fx, fy = 0.3, 0.8
    np.testing.assert_allclose(
        bilinear_kernel_weights(fx, fy),
        [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy],
    )
    with pytest.raises(ConfigValidationError):
        bilinear_kernel_weights(1.5, 0.0)


def test_nearest_fixed_upsampling():
    x = _t(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    out = upsample_fixed(FixedKind.NEAREST, x, 2).numpy()[0, 0]
    np.testing.assert_array_equal(out[0], [1, 1, 2, 2])
    np.testing.assert_array_equal(out[3], [3, 3, 4, 4])


def test_bilinear_half_pixel_centres():
    x = _t(np.array([[0.0, 1.0]]).reshape(1, 1, 1, 2))
    out = upsample_fixed(FixedKind.BILINEAR, x, 2).numpy()
    np.testing.assert_allclose(out[0, 0, 0], [0.0, 0.25, 0.75, 1.0])


def test_bilinear_identity_and_constant():
    x = np.random.default_rng(4).normal(size=(1, 2, 3, 3))
    np.testing.assert_allclose(upsample_fixed(FixedKind.BILINEAR, _t(x), 1).numpy(), x)
    const = upsample_fixed(FixedKind.BILINEAR, _t(np.full((1, 1, 3, 3), 2.5)), 2).numpy()
    np.testing.assert_allclose(const, 2.5)


# ═══════════════════════════════════════════════════════════════════════════════
# LEARNED GENERATORS
# ═══════════════════════════════════════════════════════════════════════════════

def test_carafe_zero_weights_give_uniform_kernels():
    c, k_up, k_enc, r = 3, 5, 3, 2
    weights = CarafeWeights(
        encoder_weight=_t(np.zeros((r * r * k_up * k_up, c, k_enc, k_enc))),
        encoder_bias=_t(np.zeros(r * r * k_up * k_up)),
    )
    feat = _t(np.random.default_rng(5).normal(size=(1, c, 4, 4)))
    kmap = carafe_generate(feat, weights, k_up, k_enc, r)
    assert kmap.kernels.shape == (1, 25, 8, 8)
    np.testing.assert_allclose(kmap.kernels.numpy(), 1 / 25)


def test_carafe_kernels_are_convex_and_k_up_one_is_nearest():
    rng = np.random.default_rng(6)
    feat = _t(rng.normal(size=(1, 2, 3, 3)))
    weights = CarafeWeights(_t(rng.normal(size=(4 * 9, 2, 3, 3))), _t(rng.normal(size=36)))
    k = carafe_generate(feat, weights, 3, 3, 2).kernels.numpy()
    assert (k >= 0).all()
    np.testing.assert_allclose(k.sum(axis=1), 1.0, atol=1e-12)

    single = CarafeWeights(_t(rng.normal(size=(4, 2, 3, 3))), _t(rng.normal(size=4)))
    kmap = carafe_generate(feat, single, 1, 3, 2)
    np.testing.assert_allclose(kmap.kernels.numpy(), 1.0)
    np.testing.assert_allclose(apply_kernel_map(feat, kmap).numpy(), nearest_upsample(feat, 2).numpy())


def test_indexnet_zero_weights():
    feat = _t(np.random.default_rng(7).normal(size=(1, 3, 4, 4)))
    up, down = indexnet_generate(feat, IndexNetWeights(_t(np.zeros((4, 3, 4, 4)))), k_enc=4, stride=2)
    assert up.kernels.shape == (1, 1, 4, 4) and up.s == 1
    np.testing.assert_allclose(up.kernels.numpy(), 0.5)
    assert down.kernels.shape == (1, 4, 2, 2) and down.direction == Direction.DOWN
    np.testing.assert_allclose(down.kernels.numpy(), 0.25)


def test_indexnet_up_is_masked_nearest_and_down_groups_sum_to_one():
    rng = np.random.default_rng(8)
    enc = _t(rng.normal(size=(2, 3, 4, 4)))
    dec = _t(rng.normal(size=(2, 3, 2, 2)))
    up, down = indexnet_generate(enc, IndexNetWeights(_t(rng.normal(size=(4, 3, 4, 4)))), 4, 2)
    expected = nearest_upsample(dec, 2).numpy() * up.kernels.numpy()
    np.testing.assert_allclose(apply_kernel_map(dec, up).numpy(), expected, atol=1e-12)
    np.testing.assert_allclose(down.kernels.numpy().sum(axis=1), 1.0, atol=1e-12)


def test_deconv_with_nearest_kernel_reproduces_nearest():
    x = _t(np.random.default_rng(9).normal(size=(1, 1, 3, 3)))
    w = np.zeros((1, 1, 4, 4))
    w[0, 0, 1:3, 1:3] = 1.0
    out = deconv_upsample(x, _t(w), _t(np.zeros(1)), 2)
    np.testing.assert_allclose(out.numpy(), nearest_upsample(x, 2).numpy(), atol=1e-12)
    with pytest.raises(ShapeError):
        deconv_upsample(x, _t(np.zeros((1, 1, 6, 6))), None, 3)


def test_pixelshuffle_with_centre_tap_is_a_pure_reshuffle():
    c, r = 2, 2
    x = _t(np.random.default_rng(10).normal(size=(1, c, 3, 3)))
    w = np.zeros((c * r * r, c, 3, 3))
    for oc in range(c * r * r):
        w[oc, oc // (r * r), 1, 1] = 1.0
    out = pixelshuffle_upsample(x, _t(w), _t(np.zeros(c * r * r)), r)
    np.testing.assert_allclose(out.numpy(), nearest_upsample(x, r).numpy(), atol=1e-12)


# ═══════════════════════════════════════════════════════════════════════════════
# STAGE MODULES
# ═══════════════════════════════════════════════════════════════════════════════

@pytest.mark.parametrize(
    "module",
    [
        FixedUpsampler("up", 4, kind=FixedKind.NEAREST),
        FixedUpsampler("up", 4, kind=FixedKind.BILINEAR),
        DeconvUpsampler("up", 4),
        PixelShuffleUpsampler("up", 4),
        CarafeUpsampler("up", 4),
        IndexNetUpsampler("up", 4),
    ],
    ids=lambda m: m.kind.value,
)
def test_stage_upsampler_shape_contract(module):
    rng = np.random.default_rng(11)
    params = init_params(module.param_specs(), 0, dtype=np.float64)
    feature = _t(rng.normal(size=(2, 4, 3, 3)))
    guidance = Guidance(feature=_t(rng.normal(size=(2, 4, 6, 6))))
    out, kmap = module.upsample(params, feature, guidance)
    assert out.shape == (2, 4, 6, 6)
    if kmap is not None:
        assert kmap.output_hw == (6, 6)


def test_max_unpool_module_needs_indices():
    x = _t(np.random.default_rng(12).normal(size=(1, 2, 4, 4)))
    pooled, indices = max_pool_2x2(x)
    module = MaxUnpoolUpsampler("up", 2)
    out, _ = module.upsample(None, pooled, Guidance(pool_indices=indices))
    assert out.shape == (1, 2, 4, 4)
    np.testing.assert_allclose(out.numpy().reshape(1, 2, 2, 2, 2, 2).sum(axis=(3, 5)), pooled.numpy())
    with pytest.raises(ConfigValidationError):
        module.upsample(None, pooled, Guidance())


def test_paired_indexnet_downsample():
    module = IndexNetUpsampler("idx", 3, paired=True)
    params = init_params(module.param_specs(), 1, dtype=np.float64)
    out, kmap = module.downsample(params, _t(np.ones((1, 3, 4, 4))))
    assert out.shape == (1, 3, 2, 2)
    np.testing.assert_allclose(out.numpy(), 1.0, atol=1e-12)
    with pytest.raises(ConfigValidationError):
        IndexNetUpsampler("idx", 3).downsample(params, _t(np.ones((1, 3, 4, 4))))
