"""Iterative image optimization: total loss assembly, scale calibration,
Adam stepping and the relative-change stopping rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .losses import (
    FusionSpec,
    GaussianMMD,
    StyleLossKind,
    content_loss_and_grad,
    feature_grad_to_tensor,
    style_loss_and_grad,
    to_feature_matrix,
)
from .network import ActivationCache, NetworkSpec, backward_to_image, forward_capture
from .tensor import Tensor4, check_tensor4

DEFAULT_STYLE_LAYERS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1")
DEFAULT_CONTENT_LAYER = "relu4_2"

INIT_RANGE = 128.0  # uniform noise bound in preprocessed pixel units

ADAM_LR = 10.0
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

STOCHASTIC_STOP_WINDOW = 10


class CalibrationDegenerateError(RuntimeError):
    """Raised when a gradient norm needed for scale calibration is zero."""


@dataclass
class TransferConfig:
    """Knobs of one transfer run; defaults give the balanced standard setup."""

    method: StyleLossKind | FusionSpec
    alpha: float = 1.0
    gamma: float = 1.0
    layer_weights: Mapping[str, float] | None = None
    content_layer: str = DEFAULT_CONTENT_LAYER
    style_layers: Sequence[str] = DEFAULT_STYLE_LAYERS
    max_iters: int = 1000
    rel_tol: float = 0.005
    seed: int = 0
    pooling: str = "max"

    def validate(self) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.style_layers:
            raise ValueError("need at least one style layer")
        if not (0.0 < self.rel_tol < 1.0):
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.pooling not in ("max", "avg"):
            raise ValueError(f"pooling must be 'max' or 'avg', got {self.pooling}")
        for name, w in (self.layer_weights or {}).items():
            if w < 0:
                raise ValueError(f"layer weight for {name!r} must be >= 0, got {w}")

    def weight_for(self, layer: str) -> float:
        if self.layer_weights is None:
            return 1.0
        return float(self.layer_weights.get(layer, 1.0))

    def capture_layers(self) -> set[str]:
        return {self.content_layer, *self.style_layers}


@dataclass(frozen=True)
class CalibrationResult:
    """Style-scale factor making style and content image-gradients equal-norm."""

    beta_prime: float
    content_grad_norm: float
    style_grad_norm: float


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    total: float
    content: float
    style: float


@dataclass
class AdamState:
    """Adam accumulators for the image iterate."""

    image: Tensor4
    step: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros_like(self.image)
        if self.v is None:
            self.v = np.zeros_like(self.image)

    def update(self, grad: np.ndarray) -> None:
        self.step += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * (grad * grad)
        m_hat = self.m / (1.0 - ADAM_BETA1**self.step)
        v_hat = self.v / (1.0 - ADAM_BETA2**self.step)
        self.image = self.image - ADAM_LR * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def _gaussian_seed(seed: int, iteration: int, layer_index: int) -> int:
    ss = np.random.SeedSequence([seed, iteration, layer_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def is_stochastic(method: StyleLossKind | FusionSpec) -> bool:
    """True when the method's loss value varies under reseeding."""
    if isinstance(method, FusionSpec):
        return any(is_stochastic(kind) for kind, _ in method.members)
    return isinstance(method, GaussianMMD)


def _style_terms(
    cache_x: ActivationCache,
    cache_s: ActivationCache,
    config: TransferConfig,
    iteration: int,
):
    """Per-layer weighted style losses and activation gradients."""
    total = 0.0
    grads = {}
    for li, layer in enumerate(config.style_layers):
        for cache, tag in ((cache_x, "image"), (cache_s, "style")):
            if layer not in cache:
                raise KeyError(f"style layer {layer!r} missing from {tag} cache")
        F = to_feature_matrix(cache_x[layer])
        S = to_feature_matrix(cache_s[layer])
        seed = _gaussian_seed(config.seed, iteration, li)
        loss, grad = style_loss_and_grad(F, S, config.method, rng_seed=seed)
        if not (math.isfinite(loss) and np.isfinite(grad).all()):
            raise RuntimeError(
                f"non-finite style loss/gradient at layer {layer!r} "
                f"(iteration {iteration}); the optimization diverged"
            )
        w = config.weight_for(layer)
        total += w * loss
        grads[layer] = w * feature_grad_to_tensor(grad, cache_x[layer].shape)
    return total, grads


def _content_term(cache_x: ActivationCache, cache_c: ActivationCache, config: TransferConfig):
    layer = config.content_layer
    for cache, tag in ((cache_x, "image"), (cache_c, "content")):
        if layer not in cache:
            raise KeyError(f"content layer {layer!r} missing from {tag} cache")
    F = to_feature_matrix(cache_x[layer])
    P = to_feature_matrix(cache_c[layer])
    loss, grad = content_loss_and_grad(F, P)
    if not math.isfinite(loss):
        raise RuntimeError("non-finite content loss; the optimization diverged")
    return loss, feature_grad_to_tensor(grad, cache_x[layer].shape)


def total_loss_and_image_grad(
    spec: NetworkSpec,
    cache_x: ActivationCache,
    cache_c: ActivationCache,
    cache_s: ActivationCache,
    config: TransferConfig,
    beta_prime: float,
    iteration: int,
) -> tuple[float, float, float, Tensor4]:
    """Total loss alpha*Lc + gamma*beta'*Ls and its image gradient.

    Returns (L_total, L_content, L_style, grad_image) with L_content and
    L_style the raw (unscaled) component values.
    """
    l_content, g_content = _content_term(cache_x, cache_c, config)
    l_style, style_grads = _style_terms(cache_x, cache_s, config, iteration)
    if not (math.isfinite(l_content) and math.isfinite(l_style)):
        raise RuntimeError(
            f"non-finite loss at iteration {iteration}: "
            f"content={l_content!r}, style={l_style!r}"
        )

    style_scale = config.gamma * beta_prime
    injections: dict[str, Tensor4] = {
        layer: style_scale * g for layer, g in style_grads.items()
    }
    if config.content_layer in injections:
        injections[config.content_layer] = (
            injections[config.content_layer] + config.alpha * g_content
        )
    else:
        injections[config.content_layer] = config.alpha * g_content

    grad_image = backward_to_image(spec, cache_x, injections)
    total = config.alpha * l_content + style_scale * l_style
    return total, l_content, l_style, grad_image


def _calibrate_from_caches(
    spec: NetworkSpec,
    cache_x: ActivationCache,
    cache_c: ActivationCache,
    cache_s: ActivationCache,
    config: TransferConfig,
) -> CalibrationResult:
    _, g_content = _content_term(cache_x, cache_c, config)
    _, style_grads = _style_terms(cache_x, cache_s, config, iteration=0)

    img_grad_c = backward_to_image(
        spec, cache_x, {config.content_layer: config.alpha * g_content}
    )
    img_grad_s = backward_to_image(spec, cache_x, style_grads)
    norm_c = float(np.linalg.norm(img_grad_c))
    norm_s = float(np.linalg.norm(img_grad_s))
    if norm_s == 0.0:
        raise CalibrationDegenerateError(
            "style gradient on the image is zero at initialization; "
            "cannot calibrate the style scale"
        )
    if norm_c == 0.0:
        raise CalibrationDegenerateError(
            "content gradient on the image is zero at initialization; "
            "cannot calibrate the style scale"
        )
    return CalibrationResult(norm_c / norm_s, norm_c, norm_s)


def calibrate_beta_prime(
    spec: NetworkSpec,
    x_init: Tensor4,
    x_c: Tensor4,
    x_s: Tensor4,
    config: TransferConfig,
) -> CalibrationResult:
    """Pick beta' so style and content image-gradient norms match at start."""
    config.validate()
    cache_x = forward_capture(spec, x_init, config.capture_layers())
    cache_c = forward_capture(spec, x_c, {config.content_layer})
    cache_s = forward_capture(spec, x_s, set(config.style_layers))
    return _calibrate_from_caches(spec, cache_x, cache_c, cache_s, config)


def noise_image(shape: tuple[int, int, int, int], seed: int) -> Tensor4:
    """Seeded uniform noise covering the preprocessed pixel range."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)


def run_transfer(
    spec: NetworkSpec,
    x_c: Tensor4,
    x_s: Tensor4,
    config: TransferConfig,
    init: Tensor4 | None = None,
    on_iteration: Callable[[int, Tensor4, TraceRow], None] | None = None,
) -> tuple[Tensor4, list[TraceRow]]:
    """Optimize an image against content x_c and style x_s.

    The iterate starts as seeded uniform noise (or the given init), is stepped
    by Adam, and stops when the relative change of the total loss between
    successive iterations falls below rel_tol, or at max_iters. Stochastic
    (sampled-Gaussian) methods apply the same rule to a 10-iteration moving
    average instead of the raw loss. Returns the final image and the full
    per-iteration loss trace.
    """
    config.validate()
    check_tensor4(x_c, "content image")
    check_tensor4(x_s, "style image")
    cache_c = forward_capture(spec, x_c, {config.content_layer})
    cache_s = forward_capture(spec, x_s, set(config.style_layers))

    x = noise_image(x_c.shape, config.seed) if init is None else np.array(init, dtype=np.float64)
    capture = config.capture_layers()

    cache_x = forward_capture(spec, x, capture)
    try:
        calibration = _calibrate_from_caches(spec, cache_x, cache_c, cache_s, config)
        beta_prime = calibration.beta_prime
    except CalibrationDegenerateError:
        # If both terms already sit at (numerically) zero loss there is
        # nothing to optimize: report the single evaluation and return.
        l_content, _ = _content_term(cache_x, cache_c, config)
        l_style, _ = _style_terms(cache_x, cache_s, config, iteration=1)
        if abs(config.alpha * l_content) + abs(config.gamma * l_style) > 1e-9:
            raise
        row = TraceRow(1, config.alpha * l_content + config.gamma * l_style,
                       l_content, l_style)
        if on_iteration is not None:
            on_iteration(1, x, row)
        return x, [row]

    smooth = is_stochastic(config.method)
    state = AdamState(image=x)
    trace: list[TraceRow] = []
    totals: list[float] = []
    prev_stat: float | None = None

    for t in range(1, config.max_iters + 1):
        if t > 1:
            cache_x = forward_capture(spec, state.image, capture)
        total, l_content, l_style, grad = total_loss_and_image_grad(
            spec, cache_x, cache_c, cache_s, config, beta_prime, iteration=t
        )
        if math.isnan(total) or not np.isfinite(grad).all():
            raise RuntimeError(
                f"optimization diverged: non-finite loss/gradient at iteration {t} "
                f"(total={total!r})"
            )
        row = TraceRow(t, total, l_content, l_style)
        trace.append(row)
        totals.append(total)
        if on_iteration is not None:
            on_iteration(t, state.image, row)

        stat = (
            float(np.mean(totals[-STOCHASTIC_STOP_WINDOW:])) if smooth else total
        )
        if t == 1 and total == 0.0:
            break
        if prev_stat is not None:
            if prev_stat == 0.0 or abs(stat - prev_stat) / abs(prev_stat) < config.rel_tol:
                break
        prev_stat = stat
        state.update(grad)

    return state.image, trace


def trace_to_csv(trace: Sequence[TraceRow]) -> str:
    """Render a loss trace as CSV with 17-significant-digit floats."""
    lines = ["iter,total,content,style"]
    for row in trace:
        lines.append(
            f"{row.iteration},{row.total:.17g},{row.content:.17g},{row.style:.17g}"
        )
    return "\n".join(lines) + "\n"
