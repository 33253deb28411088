"""Feature-extractor chains: build, forward with layer capture, backward to image.

A NetworkSpec is a plain chain of conv / relu / pool layers. The VGG-19 preset
is built from a weight container; tests run the same machinery on tiny
random-weight chains, so nothing here assumes pretrained weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .tensor import (
    ConvParams,
    Tensor4,
    check_tensor4,
    conv2d_backward_input,
    conv2d_forward,
    pool2x2_backward,
    pool2x2_forward,
    relu_backward,
    relu_forward,
)
from .weights_io import WeightContainer


class NetworkBuildError(ValueError):
    """Missing or mis-shaped weight tensor while assembling a network."""


class UnknownLayerError(ValueError):
    """A requested layer name does not exist in the network."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # "conv" | "relu" | "pool"
    params: ConvParams | None = None
    pool_mode: str = "max"

    def __post_init__(self):
        if self.kind not in ("conv", "relu", "pool"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv" and self.params is None:
            raise ValueError(f"conv layer {self.name!r} needs ConvParams")
        if self.kind == "pool" and self.pool_mode not in ("max", "avg"):
            raise ValueError(f"pool layer {self.name!r} has bad mode {self.pool_mode!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """An immutable chain of named layers."""

    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate layer names: {dupes}")
        object.__setattr__(self, "_depth", {n: i for i, n in enumerate(names)})

    def depth_of(self, name: str) -> int:
        try:
            return self._depth[name]
        except KeyError:
            raise UnknownLayerError(f"no layer named {name!r} in network") from None

    def __contains__(self, name: str) -> bool:
        return name in self._depth


# VGG-19 conv stack: (block, convs in block, output channels)
VGG19_BLOCKS = ((1, 2, 64), (2, 2, 128), (3, 4, 256), (4, 4, 512), (5, 4, 512))


def vgg19_conv_shapes() -> dict[str, tuple[int, int, int, int]]:
    """Canonical (out_ch, in_ch, 3, 3) kernel shape per conv layer name."""
    shapes = {}
    in_ch = 3
    for block, n_convs, out_ch in VGG19_BLOCKS:
        for i in range(1, n_convs + 1):
            shapes[f"conv{block}_{i}"] = (out_ch, in_ch, 3, 3)
            in_ch = out_ch
    return shapes


def build_vgg19(weights: WeightContainer, pooling: str = "max") -> NetworkSpec:
    """Assemble the VGG-19 chain, binding conv weights from the container.

    Stored f32 weights are widened to f64. Every conv layer must be present
    as ``<name>.weight`` / ``<name>.bias`` with the canonical shape.
    """
    if pooling not in ("max", "avg"):
        raise ValueError(f"pooling must be 'max' or 'avg', got {pooling!r}")
    layers: list[LayerSpec] = []
    shapes = vgg19_conv_shapes()
    for block, n_convs, _ in VGG19_BLOCKS:
        for i in range(1, n_convs + 1):
            conv_name = f"conv{block}_{i}"
            kshape = shapes[conv_name]
            for suffix, want in ((".weight", kshape), (".bias", (kshape[0],))):
                tname = conv_name + suffix
                if tname not in weights:
                    raise NetworkBuildError(f"weight container is missing tensor {tname!r}")
                got = weights[tname].dims
                if tuple(got) != want:
                    raise NetworkBuildError(
                        f"tensor {tname!r} has shape {tuple(got)}, expected {want}"
                    )
            kernel = weights[conv_name + ".weight"].data.astype(np.float64)
            bias = weights[conv_name + ".bias"].data.astype(np.float64)
            layers.append(
                LayerSpec(conv_name, "conv", ConvParams(kernel, bias, stride=1, padding=1))
            )
            layers.append(LayerSpec(f"relu{block}_{i}", "relu"))
        layers.append(LayerSpec(f"pool{block}", "pool", pool_mode=pooling))
    return NetworkSpec(tuple(layers))


@dataclass
class ActivationCache:
    """Captured post-activation tensors for requested layers of one forward pass.

    The records field keeps the per-layer backward bookkeeping (relu inputs,
    pool argmaxes, conv input shapes) so a later backward_to_image call does
    not have to recompute the forward pass; it is an internal detail.
    """

    image: Tensor4
    activations: dict[str, Tensor4]
    records: list = field(default_factory=list, repr=False)

    def __getitem__(self, name: str) -> Tensor4:
        return self.activations[name]

    def __contains__(self, name: str) -> bool:
        return name in self.activations


def _run_layers(spec: NetworkSpec, image: Tensor4, depth: int):
    """Run layers 0..depth inclusive, returning per-layer backward records
    and outputs. Record contents: conv -> input (h, w); relu -> input tensor;
    pool -> (input shape, argmax, mode)."""
    records = []
    outputs = []
    x = image
    for layer in spec.layers[: depth + 1]:
        if layer.kind == "conv":
            records.append(("conv", (x.shape[2], x.shape[3])))
            x = conv2d_forward(x, layer.params)
        elif layer.kind == "relu":
            records.append(("relu", x))
            x = relu_forward(x)
        else:
            out, argmax = pool2x2_forward(x, layer.pool_mode)
            records.append(("pool", (x.shape, argmax, layer.pool_mode)))
            x = out
        outputs.append(x)
    return records, outputs


def forward_capture(spec: NetworkSpec, image: Tensor4, capture: Iterable[str]) -> ActivationCache:
    """Single forward pass capturing the named layers' post-activation tensors.

    The pass stops after the deepest requested layer. An empty capture set
    yields an empty cache without running any layer.
    """
    check_tensor4(image, "input image")
    if image.shape[0] != 1:
        raise ValueError(f"expected a single image (batch 1), got batch {image.shape[0]}")
    wanted = set(capture)
    depths = [spec.depth_of(n) for n in wanted]  # raises on unknown names
    if not wanted:
        return ActivationCache(image=image, activations={}, records=[])
    deepest = max(depths)
    records, outputs = _run_layers(spec, image, deepest)
    activations = {spec.layers[d].name: outputs[d] for d in depths}
    return ActivationCache(image=image, activations=activations, records=records)


def backward_to_image(
    spec: NetworkSpec, cache: ActivationCache, grads: Mapping[str, Tensor4]
) -> Tensor4:
    """Back-propagate injected per-layer gradients to the input image.

    Each entry of grads is dL/d(activation of that layer); the result is the
    sum over injections of their image gradients (backprop is linear in the
    injected cotangents). All injected layers must have been captured.
    """
    for name, g in grads.items():
        if name not in cache:
            raise UnknownLayerError(f"gradient injected at non-captured layer {name!r}")
        if g.shape != cache[name].shape:
            raise ValueError(
                f"gradient for {name!r} has shape {g.shape}, "
                f"activation has {cache[name].shape}"
            )
    if not grads:
        return np.zeros_like(cache.image)
    deepest = max(spec.depth_of(n) for n in grads)
    if len(cache.records) > deepest:
        records = cache.records
    else:  # cache built without records (or too shallow): recompute
        records, _ = _run_layers(spec, cache.image, deepest)

    by_depth = {spec.depth_of(n): g for n, g in grads.items()}
    grad = np.array(by_depth[deepest], dtype=np.float64, copy=True)
    for d in range(deepest, -1, -1):
        kind, rec = records[d]
        layer = spec.layers[d]
        if kind == "conv":
            grad = conv2d_backward_input(grad, layer.params, input_hw=rec)
        elif kind == "relu":
            grad = relu_backward(grad, rec)
        else:
            in_shape, argmax, mode = rec
            grad = pool2x2_backward(grad, in_shape, argmax, mode)
        if d > 0 and (d - 1) in by_depth:
            grad += by_depth[d - 1]
    return grad
