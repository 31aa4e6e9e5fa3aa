"""
Finite-difference suites run by `gradcheck`
Each case is a scalar function of a few float64 inputs; the loss is a fixed
random weighting of the op output so every output entry contributes.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
import structlog

from ..a2u import A2UConfig, A2UParams, a2u_downsample_generate, a2u_generate
from ..nn import BatchNormState, NormMode, ParamRegistry, Trace, batchnorm2d, init_params
from ..recon.toynet import ToyNet, ToyNetSpec, UpsamplerSpec
from ..tensor import (
    ConvSpec,
    Tensor,
    conv2d,
    conv_transpose2d,
    fold,
    global_avg_pool,
    grad_check,
    hadamard,
    l1_loss,
    max_pool_2x2,
    max_unpool_2x2,
    no_tape,
    pad2d,
    per_sample_depthwise,
    per_sample_pointwise,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    sigmoid,
    softmax,
    sum as tsum,
    tanh,
    unfold,
    weighted_window_sum,
)
from ..upsampling import (
    CarafeWeights,
    Direction,
    IndexNetWeights,
    KernelMap,
    apply_kernel_map,
    carafe_generate,
    indexnet_generate,
    resample_bilinear,
)

logger = structlog.get_logger()

TOLERANCE = 1e-4
A2U_VARIANTS = ("static-cs", "static-cw", "hybrid-cs", "hybrid-cw", "dynamic-cs", "dynamic-cw")


class GradScope(str, Enum):
    OPS = "ops"
    A2U = "a2u"
    NET = "net"
    ALL = "all"


@dataclass
class GradCase:
    name: str
    fn: Callable[..., Tensor]
    inputs: list[np.ndarray]
    eps: float = 1e-4


@dataclass
class GradResult:
    name: str
    error: float

    @property
    def passed(self) -> bool:
        return self.error <= TOLERANCE


class _RandomWeighting:
    """Σ w ⊙ out with one fixed random w per output shape."""

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(seed)
        self._weights: dict[tuple[int, ...], np.ndarray] = {}

    def __call__(self, out: Tensor) -> Tensor:
        w = self._weights.get(out.shape)
        if w is None:
            w = self._weights[out.shape] = self._rng.standard_normal(out.shape)
        return tsum(hadamard(out, Tensor(w, dtype=out.dtype)))


@dataclass
class _CaseBuilder:
    seed: int = 0
    cases: list[GradCase] = field(default_factory=list)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def normal(self, *shape: int, scale: float = 1.0) -> np.ndarray:
        return scale * self.rng.standard_normal(shape)

    def away_from_zero(self, *shape: int) -> np.ndarray:
        """Values with |v| in [0.2, 1]: no kink of relu/abs within a finite-difference step."""
        return self.rng.choice([-1.0, 1.0], size=shape) * self.rng.uniform(0.2, 1.0, size=shape)

    def distinct(self, *shape: int) -> np.ndarray:
        """A shuffled ramp: no ties within any pooling window."""
        return self.rng.permutation(np.prod(shape)).reshape(shape) / 7.0

    def add(self, name: str, fn: Callable[..., Tensor], *inputs: np.ndarray, eps: float = 1e-4) -> None:
        weighting = _RandomWeighting(self.seed + len(self.cases) + 1)
        self.cases.append(GradCase(name, lambda *t, _fn=fn: weighting(_fn(*t)), list(inputs), eps))


# ═══════════════════════════════════════════════════════════════════════════════
# OPS
# ═══════════════════════════════════════════════════════════════════════════════

def ops_cases(seed: int = 0) -> list[GradCase]:
    b = _CaseBuilder(seed)

    conv = ConvSpec.square(3, 4, 3, padding=1)
    b.add("conv2d", lambda x, w, bias: conv2d(x, conv, w, bias), b.normal(2, 3, 5, 5), b.normal(*conv.weight_shape), b.normal(4))
    grouped = ConvSpec.square(4, 4, 3, stride=2, padding=1, groups=2, has_bias=False)
    b.add("conv2d_grouped_strided", lambda x, w: conv2d(x, grouped, w), b.normal(1, 4, 7, 7), b.normal(*grouped.weight_shape))
    b.add(
        "conv_transpose2d",
        lambda x, w, bias: conv_transpose2d(x, w, bias, stride=2, padding=1),
        b.normal(1, 3, 3, 3), b.normal(3, 2, 4, 4), b.normal(2),
    )
    b.add("softmax", lambda x: softmax(x, axis=1), b.normal(2, 5, 3, 3))

    def bn(x, gamma, beta):
        return batchnorm2d(x, gamma, beta, BatchNormState.fresh(2, dtype=np.float64), NormMode.TRAIN)

    b.add("batchnorm2d_train", bn, b.normal(3, 2, 3, 3), b.normal(2), b.normal(2))
    b.add("pixel_shuffle", lambda x: pixel_shuffle(x, 2), b.normal(2, 8, 2, 3))
    b.add("pixel_unshuffle", lambda x: pixel_unshuffle(x, 2), b.normal(2, 2, 4, 6))
    b.add("sigmoid", sigmoid, b.normal(2, 3, 3, 3, scale=2.0))
    b.add("tanh", tanh, b.normal(2, 3, 3, 3))
    b.add("relu", relu, b.away_from_zero(2, 3, 3, 3))
    b.add("unfold", lambda x: unfold(x, 3, stride=1, pad=1), b.normal(1, 2, 4, 4))
    b.add("fold", lambda c: fold(c, (4, 4), 3, stride=1, pad=1), b.normal(1, 18, 16))
    b.add("pad2d_crop", lambda x: pad2d(x, 1, -1, 2, -1), b.normal(1, 2, 4, 5))
    b.add("max_pool_2x2", lambda x: max_pool_2x2(x)[0], b.distinct(2, 2, 4, 4))

    pool_src = b.distinct(1, 2, 4, 4)
    _, indices = max_pool_2x2(Tensor(pool_src))
    b.add("max_unpool_2x2", lambda p: max_unpool_2x2(p, indices), b.normal(1, 2, 2, 2))
    b.add("resample_bilinear", lambda x: resample_bilinear(x, 7, 9), b.normal(1, 2, 4, 5))
    b.add("global_avg_pool", global_avg_pool, b.normal(2, 3, 4, 4))
    b.add("per_sample_pointwise", per_sample_pointwise, b.normal(2, 3, 3, 3), b.normal(2, 4, 3))
    b.add("per_sample_depthwise", lambda x, w: per_sample_depthwise(x, w, stride=1), b.normal(2, 2, 5, 5), b.normal(2, 2, 3, 3, 3))
    b.add("weighted_window_sum", weighted_window_sum, b.normal(1, 2, 4, 3, 3), b.normal(1, 4, 3, 3))
    pred = b.normal(2, 2, 3, 3)
    b.add("l1_loss", l1_loss, pred, pred + b.away_from_zero(2, 2, 3, 3))

    def apply_up(src, logits):
        return apply_kernel_map(src, KernelMap(softmax(logits, axis=1), s=3, r=2))

    def apply_down(src, logits):
        return apply_kernel_map(src, KernelMap(softmax(logits, axis=1), s=4, r=2, direction=Direction.DOWN))

    b.add("apply_kernel_map_up", apply_up, b.normal(1, 2, 3, 3), b.normal(1, 9, 6, 6))
    b.add("apply_kernel_map_down", apply_down, b.normal(1, 2, 6, 6), b.normal(1, 16, 3, 3))

    def carafe(feat, enc_w, enc_b):
        weights = CarafeWeights(encoder_weight=enc_w, encoder_bias=enc_b)
        return apply_kernel_map(feat, carafe_generate(feat, weights, k_up=3, k_enc=3, r=2))

    b.add("carafe", carafe, b.normal(1, 2, 3, 3), b.normal(2 * 2 * 9, 2, 3, 3, scale=0.3), b.normal(36, scale=0.1))

    def indexnet(enc, dec, w):
        up, _ = indexnet_generate(enc, IndexNetWeights(encoder_weight=w), k_enc=4, stride=2)
        return apply_kernel_map(dec, up)

    b.add("indexnet", indexnet, b.normal(1, 2, 4, 4), b.normal(1, 2, 2, 2), b.normal(4, 2, 4, 4, scale=0.3))
    return b.cases


# ═══════════════════════════════════════════════════════════════════════════════
# A2U
# ═══════════════════════════════════════════════════════════════════════════════

_PARAM_FIELDS = ("u", "v", "u_gen", "v_gen", "p", "p_gen", "p_down", "p_down_gen")


def _rebind(params: A2UParams, tensors: tuple[Tensor, ...]) -> A2UParams:
    present = [name for name in _PARAM_FIELDS if getattr(params, name) is not None]
    return replace(params, **dict(zip(present, tensors)))


def a2u_cases(seed: int = 0, channels: int = 2, variants: tuple[str, ...] = A2U_VARIANTS) -> list[GradCase]:
    """Generate→apply for every mode × channel variant (k_en=3, s_u=3, r=2)."""
    b = _CaseBuilder(seed)
    for variant in variants:
        cfg = A2UConfig.from_variant(variant, k_en=3, s_u=3)
        params, _ = A2UParams.initialize(cfg, channels, seed=seed, dtype=np.float64)
        leaves = [np.array(t.data) for t in params.leaves()]

        def pipeline(x, feat, *weights, _cfg=cfg, _params=params):
            kmap = a2u_generate(x, x, _rebind(_params, weights), _cfg, training=True)
            return apply_kernel_map(feat, kmap)

        b.add(f"a2u_{variant}", pipeline, b.normal(1, channels, 4, 4), b.normal(1, channels, 2, 2), *leaves)

    cfg = A2UConfig.from_variant("static-pw-cw-d", k_en=3, s_u=1)
    params, _ = A2UParams.initialize(cfg, channels, seed=seed, dtype=np.float64)
    def paired_down(x, *weights):
        return apply_kernel_map(x, a2u_downsample_generate(x, _rebind(params, weights), cfg))

    b.add("a2u_paired_down", paired_down, b.normal(1, channels, 4, 4), *[np.array(t.data) for t in params.leaves()])
    return b.cases


# ═══════════════════════════════════════════════════════════════════════════════
# NET
# ═══════════════════════════════════════════════════════════════════════════════

NET_EPS = 1e-4
# every relu input, max-pool runner-up and ℓ1 residual stays this far from its kink
KINK_MARGIN = 1e-2
NET_TRIALS = 64


def kink_margin(trace: Trace, out: np.ndarray, target: np.ndarray) -> float:
    """Distance from the nearest non-differentiable point of a traced forward pass."""
    margins = [float(np.abs(out - target).min())]
    for kind, arr in trace:
        if kind == "relu":
            margins.append(float(np.abs(arr).min()))
            continue
        n, c, h, w = arr.shape
        windows = arr[:, :, : h - h % 2, : w - w % 2].reshape(n, c, h // 2, 2, w // 2, 2)
        ranked = np.sort(windows.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4), axis=-1)
        # windows whose runner-up is a clamped zero are covered by the relu margin
        live = ranked[..., -2] > 0
        if live.any():
            margins.append(float((ranked[..., -1] - ranked[..., -2])[live].min()))
    return min(margins)


def net_cases(seed: int = 0, upsampler: Optional[UpsamplerSpec] = None) -> list[GradCase]:
    """
    A reduced toy net (one D/U pair, 4×4 inputs, batch of 2) end to end, through the ℓ1 loss.

    Init and input are redrawn until the point sits at least KINK_MARGIN from every
    relu, max-pool and ℓ1 kink, so a NET_EPS step never crosses one.
    """
    spec = ToyNetSpec.validated(architecture="C(2)-D2-C(2)-U2-C(1)", input_size=4, upsampler=upsampler or UpsamplerSpec())
    net = ToyNet(spec)
    specs = net.param_specs()
    # a conv bias feeding train-mode batchnorm cancels in the mean; it is held fixed
    normed = {s.name[: -len(".bn.gamma")] for s in specs if s.name.endswith(".bn.gamma")}
    fixed = {f"{block}.conv.bias" for block in normed}
    trainable = [s.name for s in specs if s.trainable and s.name not in fixed]
    rng = np.random.default_rng(seed)

    def bind(buffers: dict[str, np.ndarray], weights) -> ParamRegistry:
        params = ParamRegistry()
        bound = dict(zip(trainable, weights))
        for s in specs:
            if s.name in bound:
                params.add(s.name, bound[s.name])
            else:
                params.add(s.name, Tensor(buffers[s.name], dtype=np.float64), trainable=False)
        return params

    best: Optional[tuple[float, np.ndarray, list[np.ndarray], dict[str, np.ndarray]]] = None
    for trial in range(NET_TRIALS):
        registry = init_params(specs, seed=seed + trial, dtype=np.float64)
        buffers = {s.name: np.array(registry[s.name].data) for s in specs if s.name not in trainable}
        weights = [np.array(registry[n].data) for n in trainable]
        x = rng.uniform(0.0, 1.0, size=(2, 1, 4, 4))
        trace: Trace = []
        with no_tape():
            params = bind(buffers, [Tensor(w, dtype=np.float64) for w in weights])
            out = net.forward(params, Tensor(x, dtype=np.float64), training=True, trace=trace)
        margin = kink_margin(trace, out.numpy(), x + 0.5)
        if best is None or margin > best[0]:
            best = (margin, x, weights, buffers)
        if margin >= KINK_MARGIN:
            break
    margin, x, weights, buffers = best
    if margin < KINK_MARGIN:
        logger.warning("gradcheck_net_near_kink", margin=margin, required=KINK_MARGIN)

    def loss(inp, *ws):
        out = net.forward(bind(buffers, ws), inp, training=True)
        return l1_loss(out, Tensor(x + 0.5, dtype=np.float64))

    return [GradCase(f"net_{spec.upsampler.label}", loss, [x] + weights, eps=NET_EPS)]


def cases_for(scope: GradScope, seed: int = 0) -> list[GradCase]:
    scope = GradScope(scope)
    out: list[GradCase] = []
    if scope in (GradScope.OPS, GradScope.ALL):
        out += ops_cases(seed)
    if scope in (GradScope.A2U, GradScope.ALL):
        out += a2u_cases(seed)
    if scope in (GradScope.NET, GradScope.ALL):
        out += net_cases(seed)
    return out


def run_cases(cases: list[GradCase]) -> list[GradResult]:
    results = []
    for case in cases:
        error = grad_check(case.fn, case.inputs, eps=case.eps)
        results.append(GradResult(case.name, error))
        log = logger.info if error <= TOLERANCE else logger.error
        log("gradcheck_case", case=case.name, worst_relative_error=float(f"{error:.3e}"))
    return results
