"""Content and style losses over layer activations, with analytic gradients.

A layer's activations are viewed as a feature matrix F of shape
(channels N, positions M); each column is one spatial position's activation
vector and is treated as one sample when comparing feature distributions.
Style losses: Gram matching, kernel MMD (linear / degree-2 polynomial /
sampled Gaussian), per-channel mean+std matching, and weighted fusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor4


def to_feature_matrix(t: Tensor4) -> np.ndarray:
    """Reshape a (1, C, H, W) activation tensor to (C, H*W), row-major."""
    if t.ndim != 4 or t.shape[0] != 1:
        raise ValueError(f"expected a (1, C, H, W) tensor, got shape {t.shape}")
    c = t.shape[1]
    return t.reshape(c, -1)


def feature_grad_to_tensor(grad: np.ndarray, shape: tuple[int, int, int, int]) -> Tensor4:
    """Inverse of to_feature_matrix for a gradient of the same layer."""
    return grad.reshape(shape)


def _check_channels(F: np.ndarray, S: np.ndarray) -> None:
    if F.ndim != 2 or S.ndim != 2:
        raise ValueError(f"feature matrices must be 2-D, got {F.shape} and {S.shape}")
    if F.shape[0] != S.shape[0]:
        raise ValueError(f"channel mismatch: {F.shape[0]} vs {S.shape[0]}")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearKernel:
    """k(x, y) = x.y"""


@dataclass(frozen=True)
class PolyKernel:
    """k(x, y) = (x.y + c)^2 (degree fixed at 2)."""

    c: float = 0.0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError(f"poly kernel offset c must be >= 0, got {self.c}")


@dataclass(frozen=True)
class GaussianKernel:
    """k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).

    bandwidth is sigma^2; None selects the data-driven policy (mean of the
    squared distances of the pairs entering the estimator).
    """

    bandwidth: float | None = None

    def __post_init__(self):
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError(f"fixed bandwidth must be > 0, got {self.bandwidth}")


KernelKind = LinearKernel | PolyKernel | GaussianKernel


def _sq_dists(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise squared euclidean distances between columns of X and Y."""
    xx = np.sum(X * X, axis=0)
    yy = np.sum(Y * Y, axis=0)
    d2 = xx[:, None] + yy[None, :] - 2.0 * (X.T @ Y)
    return np.maximum(d2, 0.0)


def mmd_biased(X: np.ndarray, Y: np.ndarray, kernel: KernelKind) -> float:
    """Full biased squared-MMD estimate between the column samples of X and Y.

    (1/n^2) sum k(x,x') + (1/m^2) sum k(y,y') - (2/nm) sum k(x,y).
    """
    _check_channels(X, Y)
    n, m = X.shape[1], Y.shape[1]
    if isinstance(kernel, LinearKernel):
        kxx, kyy, kxy = X.T @ X, Y.T @ Y, X.T @ Y
    elif isinstance(kernel, PolyKernel):
        c = kernel.c
        kxx = (X.T @ X + c) ** 2
        kyy = (Y.T @ Y + c) ** 2
        kxy = (X.T @ Y + c) ** 2
    elif isinstance(kernel, GaussianKernel):
        dxx, dyy, dxy = _sq_dists(X, X), _sq_dists(Y, Y), _sq_dists(X, Y)
        sigma2 = kernel.bandwidth
        if sigma2 is None:
            # mean squared distance over every pair the statistic touches
            sigma2 = (dxx.sum() + dyy.sum() + dxy.sum()) / (n * n + m * m + n * m)
        if sigma2 <= 0.0:
            return 0.0  # all samples identical
        kxx = np.exp(-dxx / (2.0 * sigma2))
        kyy = np.exp(-dyy / (2.0 * sigma2))
        kxy = np.exp(-dxy / (2.0 * sigma2))
    else:
        raise TypeError(f"unknown kernel {kernel!r}")
    return float(kxx.sum() / n**2 + kyy.sum() / m**2 - 2.0 * kxy.sum() / (n * m))


# ---------------------------------------------------------------------------
# style method tags
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gram:
    """Match per-position-normalized Gram matrices."""


@dataclass(frozen=True)
class PolyMMD:
    """Degree-2 polynomial-kernel MMD; c = 0 reproduces Gram matching."""

    c: float = 0.0


@dataclass(frozen=True)
class LinearMMD:
    """Linear-kernel MMD (squared distance between feature mean vectors)."""


@dataclass(frozen=True)
class GaussianMMD:
    """Linear-time sampled Gaussian-kernel MMD.

    bandwidth is sigma^2; None recomputes it each evaluation as the mean
    squared distance of the sampled pairs (held constant in the gradient).
    """

    bandwidth: float | None = None


@dataclass(frozen=True)
class BNStats:
    """Match per-channel mean and standard deviation."""


StyleLossKind = Gram | PolyMMD | LinearMMD | GaussianMMD | BNStats


@dataclass(frozen=True)
class FusionSpec:
    """Convex combination of style methods; weights are normalized to sum 1."""

    members: tuple[tuple[StyleLossKind, float], ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("fusion needs at least one member")
        weights = [float(w) for _, w in self.members]
        if any(w < 0 for w in weights):
            raise ValueError(f"fusion weights must be >= 0, got {weights}")
        total = sum(weights)
        if total <= 0:
            raise ValueError("fusion weights must not all be zero")
        object.__setattr__(
            self,
            "members",
            tuple((kind, w / total) for (kind, _), w in zip(self.members, weights)),
        )


# ---------------------------------------------------------------------------
# losses and gradients
# ---------------------------------------------------------------------------


def content_loss_and_grad(F: np.ndarray, P: np.ndarray) -> tuple[float, np.ndarray]:
    """Half squared error between feature maps; grad = F - P."""
    if F.shape != P.shape:
        raise ValueError(f"content features differ in shape: {F.shape} vs {P.shape}")
    diff = F - P
    return 0.5 * float(np.sum(diff * diff)), diff


def gram(F: np.ndarray) -> np.ndarray:
    """Per-position-normalized Gram matrix G = F F^T / M."""
    if F.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got {F.shape}")
    return (F @ F.T) / F.shape[1]


def gram_style_loss_and_grad(F: np.ndarray, S: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared Gram mismatch, 1/(4 N^2) sum (G_F - G_S)^2, with analytic grad.

    Grams are per-position normalized, so F and S may have different numbers
    of positions; with equal positions this is the classic Gram loss.
    """
    _check_channels(F, S)
    n_ch = F.shape[0]
    d = gram(F) - gram(S)
    loss = float(np.sum(d * d)) / (4.0 * n_ch**2)
    grad = (d @ F) / (n_ch**2 * F.shape[1])
    return loss, grad


def mmd_style_loss_and_grad(
    F: np.ndarray, S: np.ndarray, kind: LinearMMD | PolyMMD
) -> tuple[float, np.ndarray]:
    """Normalized biased MMD^2 between column samples, grad w.r.t. F.

    Normalization: N for the linear kernel, 4 N^2 for the polynomial kernel
    (the scale that makes poly(c=0) coincide with the Gram loss).
    """
    _check_channels(F, S)
    n_ch = F.shape[0]
    n, m = F.shape[1], S.shape[1]
    if isinstance(kind, LinearMMD):
        z = float(n_ch)
        mu_f = F.mean(axis=1)
        mu_s = S.mean(axis=1)
        delta = mu_f - mu_s
        loss = float(delta @ delta) / z
        grad = np.broadcast_to((2.0 / (n * z)) * delta[:, None], F.shape).copy()
        return loss, grad
    if isinstance(kind, PolyMMD):
        # (x.y + c)^2 expands so that MMD^2_poly(c) = |G_F - G_S|_F^2
        # + 2c MMD^2_linear with per-position-normalized Grams (the c^2
        # terms cancel); this stays O(N^2 M) instead of building M x M
        # kernel matrices.
        z = 4.0 * n_ch**2
        d = gram(F) - gram(S)
        mmd2 = float(np.sum(d * d))
        grad = (4.0 / n) * (d @ F)
        if kind.c != 0.0:
            delta = F.mean(axis=1) - S.mean(axis=1)
            mmd2 += 2.0 * kind.c * float(delta @ delta)
            grad = grad + (4.0 * kind.c / n) * delta[:, None]
        return mmd2 / z, grad / z
    raise TypeError(f"mmd_style_loss_and_grad handles LinearMMD/PolyMMD, got {kind!r}")


def _sample_pair_indices(rng: np.random.Generator, n: int, m: int, draws: int):
    """Index pairs for the linear-time estimator.

    Indices are uniform with replacement. With equally many positions the
    style-side pair reuses the image-side indices, so identical inputs cancel
    pair by pair; otherwise each side draws over its own range.
    """
    i1 = rng.integers(0, n, size=draws)
    i2 = rng.integers(0, n, size=draws)
    if n == m:
        return i1, i2, i1, i2
    j1 = rng.integers(0, m, size=draws)
    j2 = rng.integers(0, m, size=draws)
    return i1, i2, j1, j2


def gaussian_mmd_sampled_and_grad(
    F: np.ndarray,
    S: np.ndarray,
    bandwidth: float | None = None,
    rng_seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Linear-time Gaussian-kernel MMD estimate with analytic grad w.r.t. F.

    Draws min(M_F, M_S) index pairs from a generator seeded by rng_seed; each
    draw contributes h = k(f,f') + k(s,s') - k(f,s') - k(f',s) and the loss is
    mean(h). The bandwidth sigma^2 is taken as given, or as the mean squared
    distance over all sampled pairs, and is treated as a constant when
    differentiating.
    """
    _check_channels(F, S)
    n, m = F.shape[1], S.shape[1]
    if n < 2 or m < 2:
        raise ValueError(f"need at least 2 positions per side, got {n} and {m}")
    draws = min(n, m)
    rng = np.random.default_rng(rng_seed)
    i1, i2, j1, j2 = _sample_pair_indices(rng, n, m, draws)

    f1, f2 = F[:, i1], F[:, i2]
    s1, s2 = S[:, j1], S[:, j2]
    pairs = ((f1, f2), (s1, s2), (f1, s2), (f2, s1))
    d2 = [np.sum((a - b) ** 2, axis=0) for a, b in pairs]
    sigma2 = bandwidth
    if sigma2 is None:
        sigma2 = float(np.mean(np.concatenate(d2)))
    if sigma2 <= 0.0:
        return 0.0, np.zeros_like(F)  # every sampled vector identical
    k_ff, k_ss, k_fs, k_sf = [np.exp(-d / (2.0 * sigma2)) for d in d2]
    loss = float(np.mean(k_ff + k_ss - k_fs - k_sf))

    # d k(x, y)/dx = -k(x, y) (x - y) / sigma^2, distributed over the draws
    grad = np.zeros_like(F)
    scale = 1.0 / (draws * sigma2)
    np.add.at(grad.T, i1, (-scale * (k_ff * (f1 - f2) - k_fs * (f1 - s2))).T)
    np.add.at(grad.T, i2, (-scale * (k_ff * (f2 - f1) - k_sf * (f2 - s1))).T)
    return loss, grad


def bn_stats(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and standard deviation (population 1/M convention)."""
    if F.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got {F.shape}")
    mu = F.mean(axis=1)
    sigma = np.sqrt(np.mean((F - mu[:, None]) ** 2, axis=1))
    return mu, sigma


def bn_style_loss_and_grad(F: np.ndarray, S: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over channels of (mean gap)^2 + (std gap)^2, grad w.r.t. F.

    Channels with zero std on the F side use subgradient 0 for their std term.
    """
    _check_channels(F, S)
    n_ch, m = F.shape
    mu_f, sig_f = bn_stats(F)
    mu_s, sig_s = bn_stats(S)
    d_mu = mu_f - mu_s
    d_sig = sig_f - sig_s
    loss = float(np.sum(d_mu * d_mu + d_sig * d_sig)) / n_ch
    sig_term = np.divide(
        d_sig, sig_f, out=np.zeros_like(sig_f), where=sig_f > 0.0
    )
    grad = (2.0 / (n_ch * m)) * (
        d_mu[:, None] + sig_term[:, None] * (F - mu_f[:, None])
    )
    return loss, grad


def style_loss_and_grad(
    F: np.ndarray, S: np.ndarray, kind: StyleLossKind | FusionSpec, rng_seed: int = 0
) -> tuple[float, np.ndarray]:
    """Dispatch a style loss by method tag (fusion recurses over members).

    PolyMMD with c = 0 is routed through the Gram computation: the two are
    the same quantity, and sharing the code path keeps runs requested either
    way bit-for-bit identical.
    """
    if isinstance(kind, FusionSpec):
        return fused_style_loss_and_grad(F, S, kind, rng_seed=rng_seed)
    if isinstance(kind, PolyMMD) and kind.c == 0.0:
        kind = Gram()
    if isinstance(kind, Gram):
        return gram_style_loss_and_grad(F, S)
    if isinstance(kind, (LinearMMD, PolyMMD)):
        return mmd_style_loss_and_grad(F, S, kind)
    if isinstance(kind, GaussianMMD):
        return gaussian_mmd_sampled_and_grad(F, S, kind.bandwidth, rng_seed)
    if isinstance(kind, BNStats):
        return bn_style_loss_and_grad(F, S)
    raise TypeError(f"unknown style loss kind {kind!r}")


def fused_style_loss_and_grad(
    F: np.ndarray, S: np.ndarray, fusion: FusionSpec, rng_seed: int = 0
) -> tuple[float, np.ndarray]:
    """Weighted sum of member losses and gradients."""
    loss = 0.0
    grad = np.zeros_like(F)
    for kind, weight in fusion.members:
        member_loss, member_grad = style_loss_and_grad(F, S, kind, rng_seed=rng_seed)
        loss += weight * member_loss
        grad += weight * member_grad
    return loss, grad
