"""Shared test helpers: finite-difference oracles and toy network builders."""

from __future__ import annotations

import numpy as np
import pytest

from stylemmd.network import LayerSpec, NetworkSpec
from stylemmd.tensor import ConvParams
from stylemmd.weights_io import WeightContainer


def central_diff(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, elementwise in x."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        up = f(x)
        xf[i] = orig - eps
        down = f(x)
        xf[i] = orig
        flat[i] = (up - down) / (2.0 * eps)
    return grad


def rel_err(got: np.ndarray, ref: np.ndarray) -> float:
    """Max absolute deviation relative to the reference's max magnitude."""
    got = np.asarray(got, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    scale = max(float(np.max(np.abs(ref))), 1e-12)
    return float(np.max(np.abs(got - ref))) / scale


def he_conv(rng: np.random.Generator, out_ch: int, in_ch: int, k: int = 3,
            padding: int = 1, scale: float = 1.0) -> ConvParams:
    std = scale * np.sqrt(2.0 / (in_ch * k * k))
    kernel = rng.normal(0.0, std, size=(out_ch, in_ch, k, k))
    bias = rng.normal(0.0, 0.1 * std, size=out_ch)
    return ConvParams(kernel, bias, stride=1, padding=padding)


def toy_spec(seed: int = 0, in_ch: int = 3, with_pool: bool = False,
             pool_mode: str = "max") -> NetworkSpec:
    """A tiny 2-conv chain: c1 -> r1 [-> p1] -> c2 -> r2."""
    rng = np.random.default_rng(seed)
    layers = [
        LayerSpec("c1", "conv", he_conv(rng, 6, in_ch)),
        LayerSpec("r1", "relu"),
    ]
    if with_pool:
        layers.append(LayerSpec("p1", "pool", pool_mode=pool_mode))
    layers += [
        LayerSpec("c2", "conv", he_conv(rng, 8, 6)),
        LayerSpec("r2", "relu"),
    ]
    return NetworkSpec(tuple(layers))


def clean_image(spec: NetworkSpec, shape, seed: int = 0, margin: float = 1e-3,
                scale: float = 1.0) -> np.ndarray:
    """Random image whose pre-activations stay clear of the ReLU kink."""
    from stylemmd.tensor import conv2d_forward, pool2x2_forward, relu_forward

    for attempt in range(200):
        rng = np.random.default_rng(seed + 1000 * attempt)
        x = rng.normal(0.0, scale, size=shape)
        ok = True
        t = x
        for layer in spec.layers:
            if layer.kind == "conv":
                t = conv2d_forward(t, layer.params)
                if np.min(np.abs(t)) < margin:
                    ok = False
                    break
            elif layer.kind == "relu":
                t = relu_forward(t)
            else:
                t, _ = pool2x2_forward(t, layer.pool_mode)
        if ok:
            return x
    raise RuntimeError("could not find a kink-free image")


def make_vgg_container(seed: int = 0, scale: float = 1.0) -> WeightContainer:
    """Random but canonically-shaped VGG-19 weights (He-scaled, f32)."""
    from stylemmd.network import vgg19_conv_shapes

    rng = np.random.default_rng(seed)
    container = WeightContainer()
    for name, (out_ch, in_ch, kh, kw) in vgg19_conv_shapes().items():
        std = scale * np.sqrt(2.0 / (in_ch * kh * kw))
        container.add(name + ".weight",
                      rng.normal(0.0, std, size=(out_ch, in_ch, kh, kw)).astype(np.float32))
        container.add(name + ".bias",
                      rng.normal(0.0, 0.01, size=out_ch).astype(np.float32))
    return container


@pytest.fixture(scope="session")
def vgg_container() -> WeightContainer:
    return make_vgg_container(seed=7)


@pytest.fixture(scope="session")
def cli_env(tmp_path_factory, vgg_container):
    """Weights file plus small content/style PNGs for command-line runs."""
    from stylemmd.image_io import RgbImage, save_png
    from stylemmd.weights_io import save_container

    root = tmp_path_factory.mktemp("cli")
    weights = root / "vgg.mmdw"
    save_container(vgg_container, weights)
    rng = np.random.default_rng(99)
    content = root / "content.png"
    style = root / "style.png"
    save_png(RgbImage(rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)), content)
    save_png(RgbImage(rng.integers(0, 256, size=(40, 36, 3), dtype=np.uint8)), style)
    return {"weights": weights, "content": content, "style": style, "root": root}
