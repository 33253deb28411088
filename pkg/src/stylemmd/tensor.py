"""Dense 4-D tensor ops for a fixed-weight convolutional net.

All tensors are float64 numpy arrays laid out (batch, channels, height, width).
Only forward passes and gradients with respect to the *input* are provided;
the network weights are frozen, so weight gradients are never needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# (batch, channels, height, width), float64, row-major
Tensor4 = np.ndarray

# Per output element of a max pool, the flat index into the input array that
# attained the maximum (first index in row-major window order on ties).
PoolArgmax = np.ndarray

# Cap on the elements materialized per convolution work block (~128 MB f64).
_BLOCK_ELEMS = 1 << 24


class ShapeError(ValueError):
    """Raised when tensor dimensions do not match an operation's contract."""


def as_tensor4(data, dims=None) -> Tensor4:
    """Build a validated float64 (b, c, h, w) tensor from array-like data."""
    arr = np.asarray(data, dtype=np.float64)
    if dims is not None:
        arr = arr.reshape(dims)
    check_tensor4(arr)
    return arr


def check_tensor4(t: np.ndarray, name: str = "tensor") -> None:
    if not isinstance(t, np.ndarray) or t.ndim != 4:
        raise ShapeError(f"{name} must be a 4-D array, got shape {getattr(t, 'shape', None)}")
    if min(t.shape) < 1:
        raise ShapeError(f"{name} has an empty dimension: {t.shape}")
    if not np.isfinite(t).all():
        raise ValueError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class ConvParams:
    """Frozen convolution weights: kernel (out_ch, in_ch, kh, kw), bias (out_ch,)."""

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if k.ndim != 4:
            raise ShapeError(f"kernel must be 4-D (out_ch, in_ch, kh, kw), got {k.shape}")
        if k.shape[2] < 1 or k.shape[3] < 1:
            raise ShapeError(f"kernel spatial dims must be >= 1, got {k.shape}")
        if b.shape != (k.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match out_ch {k.shape[0]}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]


def conv_output_hw(in_h: int, in_w: int, params: ConvParams) -> tuple[int, int]:
    kh, kw = params.kernel.shape[2], params.kernel.shape[3]
    oh = (in_h + 2 * params.padding - kh) // params.stride + 1
    ow = (in_w + 2 * params.padding - kw) // params.stride + 1
    return oh, ow


def _pad_hw(x: Tensor4, padding: int) -> Tensor4:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _row_blocks(oh: int, per_row_elems: int):
    """Yield output-row slices small enough to bound scratch memory."""
    rows = max(1, min(oh, _BLOCK_ELEMS // max(1, per_row_elems)))
    for start in range(0, oh, rows):
        yield start, min(start + rows, oh)


def conv2d_forward(x: Tensor4, params: ConvParams) -> Tensor4:
    """Cross-correlate x with the kernel (zero padding, no kernel flip)."""
    check_tensor4(x, "conv input")
    b, c, h, w = x.shape
    if c != params.in_channels:
        raise ShapeError(
            f"conv input has {c} channels but kernel expects {params.in_channels}"
        )
    oh, ow = conv_output_hw(h, w, params)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv output would be {oh}x{ow} for input {h}x{w}, "
            f"kernel {params.kernel.shape[2]}x{params.kernel.shape[3]}, "
            f"stride {params.stride}, padding {params.padding}"
        )
    kh, kw = params.kernel.shape[2], params.kernel.shape[3]
    s = params.stride
    xp = _pad_hw(x, params.padding)
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::s, ::s, :, :]  # (b, c, oh, ow, kh, kw), a view

    out = np.empty((b, params.out_channels, oh, ow), dtype=np.float64)
    for r0, r1 in _row_blocks(oh, b * c * kh * kw * ow):
        block = np.tensordot(
            windows[:, :, r0:r1], params.kernel, axes=([1, 4, 5], [1, 2, 3])
        )  # (b, rows, ow, out_ch)
        out[:, :, r0:r1] = block.transpose(0, 3, 1, 2)
    out += params.bias[None, :, None, None]
    return out


def conv2d_backward_input(
    grad_out: Tensor4, params: ConvParams, input_hw: tuple[int, int] | None = None
) -> Tensor4:
    """Gradient of a conv2d_forward loss w.r.t. the input (weights are frozen).

    With stride > 1 the input height/width are not determined by the output
    shape; pass input_hw to disambiguate (defaults to the remainder-free size).
    """
    check_tensor4(grad_out, "conv grad_out")
    b, oc, oh, ow = grad_out.shape
    if oc != params.out_channels:
        raise ShapeError(
            f"grad_out has {oc} channels but kernel produces {params.out_channels}"
        )
    kh, kw = params.kernel.shape[2], params.kernel.shape[3]
    s, p = params.stride, params.padding
    if input_hw is None:
        input_hw = ((oh - 1) * s + kh - 2 * p, (ow - 1) * s + kw - 2 * p)
    h, w = input_hw
    if conv_output_hw(h, w, params) != (oh, ow):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} inconsistent with input {h}x{w}"
        )

    grad_xp = np.zeros((b, params.in_channels, h + 2 * p, w + 2 * p), dtype=np.float64)
    for r0, r1 in _row_blocks(oh, b * params.in_channels * kh * kw * ow):
        # (b, rows, ow, in_ch, kh, kw)
        g = np.tensordot(grad_out[:, :, r0:r1], params.kernel, axes=([1], [0]))
        g = g.transpose(0, 3, 1, 2, 4, 5)  # (b, in_ch, rows, ow, kh, kw)
        for i in range(kh):
            for j in range(kw):
                grad_xp[:, :, r0 * s + i : r0 * s + i + (r1 - r0) * s : s,
                        j : j + ow * s : s] += g[..., i, j]
    if p:
        return np.ascontiguousarray(grad_xp[:, :, p : p + h, p : p + w])
    return grad_xp


def relu_forward(x: Tensor4) -> Tensor4:
    check_tensor4(x, "relu input")
    return np.maximum(x, 0.0)


def relu_backward(grad_out: Tensor4, x: Tensor4) -> Tensor4:
    check_tensor4(grad_out, "relu grad_out")
    if grad_out.shape != x.shape:
        raise ShapeError(f"relu grad shape {grad_out.shape} != input shape {x.shape}")
    return np.where(x > 0.0, grad_out, 0.0)


def pool2x2_forward(x: Tensor4, mode: str = "max") -> tuple[Tensor4, PoolArgmax | None]:
    """2x2 stride-2 pooling; a trailing odd row/column is truncated.

    Max mode also returns the flat input index of each window maximum
    (first index in row-major window order on ties), for the backward pass.
    """
    check_tensor4(x, "pool input")
    if mode not in ("max", "avg"):
        raise ValueError(f"unknown pooling mode {mode!r}")
    b, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    if oh < 1 or ow < 1:
        raise ShapeError(f"pool input {h}x{w} too small for 2x2 stride-2 pooling")
    xt = x[:, :, : 2 * oh, : 2 * ow]
    win = xt.reshape(b, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, 4)
    if mode == "avg":
        return win.mean(axis=-1), None
    local = np.argmax(win, axis=-1)  # first max wins, row-major window order
    out = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    bi, ci, oi, oj = np.indices((b, c, oh, ow), sparse=True)
    abs_h = 2 * oi + local // 2
    abs_w = 2 * oj + local % 2
    argmax = ((bi * c + ci) * h + abs_h) * w + abs_w
    return out, argmax.astype(np.int64)


def pool2x2_backward(
    grad_out: Tensor4,
    input_shape: tuple[int, int, int, int],
    argmax: PoolArgmax | None = None,
    mode: str = "max",
) -> Tensor4:
    """Scatter pooled gradients back to the input (argmax scatter / grad/4)."""
    check_tensor4(grad_out, "pool grad_out")
    b, c, h, w = input_shape
    oh, ow = h // 2, w // 2
    if grad_out.shape != (b, c, oh, ow):
        raise ShapeError(
            f"pool grad shape {grad_out.shape} != expected {(b, c, oh, ow)}"
        )
    grad_in = np.zeros(input_shape, dtype=np.float64)
    if mode == "avg":
        quarter = grad_out / 4.0
        grad_in[:, :, : 2 * oh, : 2 * ow] = np.repeat(np.repeat(quarter, 2, axis=2), 2, axis=3)
        return grad_in
    if mode != "max":
        raise ValueError(f"unknown pooling mode {mode!r}")
    if argmax is None:
        raise ValueError("max-pool backward requires the forward argmax")
    if argmax.shape != grad_out.shape:
        raise ShapeError(f"argmax shape {argmax.shape} != grad shape {grad_out.shape}")
    flat = grad_in.reshape(-1)
    np.add.at(flat, argmax.reshape(-1), grad_out.reshape(-1))
    return grad_in
