"""Differentiable objective: entropy clustering + edge-aware smoothness + reconstruction.

The total objective is

    total = clustering + alpha * smoothness + beta * recons

where ``clustering`` pushes per-pixel assignments toward one-hot while a
``lambda_``-weighted negative entropy of the mean assignment pushes
superpixel sizes toward uniform, ``smoothness`` penalizes assignment
changes between neighboring pixels except across image edges, and
``recons`` is the mean squared reconstruction error.

Each loss is a single tape operation with a closed-form backward rule (the
loop evaluates them thousands of times, so they are not composed from the
generic elementwise primitives; the unit tests check them against both
scalar re-implementations and finite differences). Edge weights are plain
arrays: the input image is fixed, so no gradient ever flows into them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    LOG_FLOOR,
    Tensor,
    _alloc,
    _accumulate,
    _result,
    add,
    scalar_mul,
)


@dataclass
class EdgeWeights:
    """Per-pixel attenuation factors exp(-|d image|^2 / sigma), in (0, 1].

    ``wx[h, w]`` weighs the assignment difference between columns w and
    w+1, ``wy`` the one between rows h and h+1. The trailing column/row
    has weight 1 but multiplies a structurally zero difference.
    """

    wx: np.ndarray
    wy: np.ndarray
    sigma: float


@dataclass
class LossBreakdown:
    """One evaluation of the objective, with its mixing coefficients.

    ``tensor`` is the differentiable total (present when the loss was
    built under a tape); the float fields are plain copies for logging.
    """

    clustering: float
    smoothness: float
    recons: float
    total: float
    lambda_: float
    alpha: float
    beta: float
    sigma: float
    tensor: Tensor | None = None


def compute_edge_weights(i_norm, sigma: float) -> EdgeWeights:
    """Edge weights from the normalized image, held constant thereafter.

    Forward differences (zero at the last column/row), squared L2 norm
    over channels, then exp(-norm / sigma).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    img = i_norm.data if isinstance(i_norm, Tensor) else np.asarray(i_norm)
    dx = np.zeros(img.shape[:2], dtype=img.dtype)
    dy = np.zeros(img.shape[:2], dtype=img.dtype)
    dx[:, :-1] = ((img[:, 1:] - img[:, :-1]) ** 2).sum(axis=-1)
    dy[:-1, :] = ((img[1:] - img[:-1]) ** 2).sum(axis=-1)
    return EdgeWeights(
        wx=np.exp(-dx / sigma).astype(img.dtype),
        wy=np.exp(-dy / sigma).astype(img.dtype),
        sigma=float(sigma),
    )


def clustering_loss(p: Tensor, lambda_: float) -> Tensor:
    """Entropy clustering cost over an (H, W, N) soft assignment.

    Mean per-pixel assignment entropy, plus ``lambda_`` times the negative
    entropy of the mean assignment vector. Logs are guarded at a 1e-12
    floor so one-hot assignments stay finite; gradients vanish in the
    clamped region.
    """
    if lambda_ < 0:
        raise ValueError(f"lambda_ must be non-negative, got {lambda_}")
    lambda_ = float(lambda_)
    h, w, _ = p.data.shape
    dtype = p.data.dtype
    floor = np.asarray(LOG_FLOOR, dtype=dtype)
    logp = _alloc(p.data.shape, dtype)
    np.maximum(p.data, floor, out=logp)
    np.log(logp, out=logp)
    pixel_term = -float(np.einsum("hwn,hwn->", p.data, logp, optimize=False)) / (h * w)
    phat = p.data.mean(axis=(0, 1))
    log_phat = np.log(np.maximum(phat, floor))
    size_term = lambda_ * float(phat @ log_phat)
    value = np.asarray(pixel_term + size_term, dtype=dtype)

    def backward_fn(g: np.ndarray, alloc):
        if not p.requires_grad:
            return
        scale = float(g) / (h * w)
        dp = alloc(p.data.shape, dtype)
        # d(-p log p)/dp = -(log p + 1) where unclamped, -log(floor) where clamped
        np.add(logp, p.data > LOG_FLOOR, out=dp)
        dp *= -scale
        dsize = (log_phat + (phat > LOG_FLOOR)) * (lambda_ * scale)
        dp += dsize.astype(dtype)
        _accumulate(p, dp, own=True)

    return _result(value, (p,), "clustering_loss", backward_fn)


def smoothness_loss(p: Tensor, w: EdgeWeights) -> Tensor:
    """Edge-weighted L1 spatial variation of the soft assignment.

    Mean over pixels of |d/dx p|_1 * wx + |d/dy p|_1 * wy with forward
    differences that vanish at the last column/row. The subgradient of
    |.| at 0 is taken as 0.
    """
    h, wid, _ = p.data.shape
    if w.wx.shape != (h, wid) or w.wy.shape != (h, wid):
        raise ValueError(
            f"smoothness_loss: weights {w.wx.shape} do not match assignment "
            f"{p.data.shape[:2]}"
        )
    dtype = p.data.dtype
    wx = w.wx.astype(dtype, copy=False)
    wy = w.wy.astype(dtype, copy=False)
    dx = _alloc((h, wid - 1) + p.data.shape[2:], dtype)
    np.subtract(p.data[:, 1:], p.data[:, :-1], out=dx)
    dy = _alloc((h - 1, wid) + p.data.shape[2:], dtype)
    np.subtract(p.data[1:], p.data[:-1], out=dy)
    tv_x = float(np.einsum("hwn,hw->", np.abs(dx), wx[:, :-1], optimize=False))
    tv_y = float(np.einsum("hwn,hw->", np.abs(dy), wy[:-1], optimize=False))
    value = np.asarray((tv_x + tv_y) / (h * wid), dtype=dtype)

    def backward_fn(g: np.ndarray, alloc):
        if not p.requires_grad:
            return
        scale = np.asarray(float(g) / (h * wid), dtype=dtype)
        dp = alloc(p.data.shape, dtype)
        dp.fill(0)
        gx, gy = dx, dy  # dead after this node, reused in place
        np.sign(gx, out=gx)
        gx *= wx[:, :-1, None]
        gx *= scale
        dp[:, 1:] += gx
        dp[:, :-1] -= gx
        np.sign(gy, out=gy)
        gy *= wy[:-1, :, None]
        gy *= scale
        dp[1:] += gy
        dp[:-1] -= gy
        _accumulate(p, dp, own=True)

    return _result(value, (p,), "smoothness_loss", backward_fn)


def recons_loss(i_norm: Tensor, recon: Tensor) -> Tensor:
    """Mean squared error between the normalized image and its reconstruction."""
    if i_norm.data.shape != recon.data.shape:
        raise ValueError(
            f"recons_loss: shape mismatch {i_norm.data.shape} vs {recon.data.shape}"
        )
    if i_norm.data.dtype != recon.data.dtype:
        raise ValueError("recons_loss: mixed dtypes")
    dtype = recon.data.dtype
    diff = _alloc(recon.data.shape, dtype)
    np.subtract(recon.data, i_norm.data, out=diff)
    value = np.asarray(np.einsum("hwc,hwc->", diff, diff) / diff.size, dtype=dtype)

    def backward_fn(g: np.ndarray, alloc):
        scale = np.asarray(2.0 * float(g) / diff.size, dtype=dtype)
        if recon.requires_grad:
            dr = alloc(diff.shape, dtype)
            np.multiply(diff, scale, out=dr)
            _accumulate(recon, dr, own=True)
        if i_norm.requires_grad:
            di = alloc(diff.shape, dtype)
            np.multiply(diff, -scale, out=di)
            _accumulate(i_norm, di, own=True)

    return _result(value, (i_norm, recon), "recons_loss", backward_fn)


def total_loss(p: Tensor, recon: Tensor, i_norm: Tensor, w: EdgeWeights, cfg) -> LossBreakdown:
    """Combine the three terms with the coefficients from ``cfg``.

    ``cfg`` provides lambda_, alpha, beta and sigma (a RunConfig works).
    With beta == 0 the reconstruction cost is still reported but does not
    enter the optimized total.
    """
    clustering = clustering_loss(p, cfg.lambda_)
    smoothness = smoothness_loss(p, w)
    recons = recons_loss(i_norm, recon)
    total = clustering
    if cfg.alpha != 0:
        total = add(total, scalar_mul(smoothness, cfg.alpha))
    if cfg.beta != 0:
        total = add(total, scalar_mul(recons, cfg.beta))
    return LossBreakdown(
        clustering=clustering.item(),
        smoothness=smoothness.item(),
        recons=recons.item(),
        total=total.item(),
        lambda_=float(cfg.lambda_),
        alpha=float(cfg.alpha),
        beta=float(cfg.beta),
        sigma=float(cfg.sigma),
        tensor=total,
    )
