"""The per-image segmentation network and its optimizer.

The model maps a 5-channel input (3 normalized color channels plus 2
normalized pixel-coordinate channels) to ``n_superpixels + 3`` output
channels: the first ``n_superpixels`` become a per-pixel soft assignment
(instance norm, then channel softmax), the last 3 are a linear
reconstruction of the color channels.

Architecture: five hidden 3x3 conv + ReLU layers with channel counts
32 * 2**l (l = 0..4) scaled by ``width_mult`` (floor of 4), then one 3x3
output conv. All convolutions preserve the spatial size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Tensor,
    channel_slice,
    conv2d,
    instance_norm,
    relu,
    softmax_channels,
)

IN_CHANNELS = 5  # RGB + (x, y) pixel coordinates
RECON_CHANNELS = 3
N_HIDDEN = 5
BASE_CHANNELS = 32
MIN_CHANNELS = 4
KERNEL_SIZE = 3
INSTANCE_NORM_EPS = 1e-5


def hidden_channels(width_mult: float) -> list[int]:
    """Channel counts of the five hidden layers for a width multiplier."""
    if width_mult <= 0:
        raise ValueError(f"width_mult must be positive, got {width_mult}")
    return [
        max(MIN_CHANNELS, int(round(BASE_CHANNELS * 2**level * width_mult)))
        for level in range(N_HIDDEN)
    ]


@dataclass
class ModelParams:
    """All learnable parameters plus the architecture they imply."""

    weights: list[Tensor]
    biases: list[Tensor]
    channels: list[int]  # [5, hidden..., n_superpixels + 3]
    n_superpixels: int
    width_mult: float
    seed: int

    def parameters(self) -> list[Tensor]:
        return list(self.weights) + list(self.biases)

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass
class ModelOutput:
    logits_p: Tensor  # (H, W, N) pre-normalization assignment logits
    p: Tensor  # (H, W, N) soft assignment, rows sum to 1
    recon: Tensor  # (H, W, 3) reconstruction, identity activation


def init_model(
    n_superpixels: int,
    width_mult: float = 1.0,
    seed: int = 0,
    dtype=np.float32,
) -> ModelParams:
    """Draw a fresh random model, deterministically for a given seed.

    Weights are uniform in +-sqrt(6 / fan_in); biases start at zero.
    """
    if n_superpixels < 2:
        raise ValueError(f"n_superpixels must be >= 2, got {n_superpixels}")
    chans = [IN_CHANNELS] + hidden_channels(width_mult) + [n_superpixels + RECON_CHANNELS]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for cin, cout in zip(chans[:-1], chans[1:]):
        fan_in = KERNEL_SIZE * KERNEL_SIZE * cin
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(KERNEL_SIZE, KERNEL_SIZE, cin, cout))
        weights.append(Tensor(w.astype(dtype), requires_grad=True))
        biases.append(Tensor(np.zeros(cout, dtype=dtype), requires_grad=True))
    return ModelParams(
        weights=weights,
        biases=biases,
        channels=chans,
        n_superpixels=n_superpixels,
        width_mult=width_mult,
        seed=seed,
    )


def forward(params: ModelParams, x: Tensor) -> ModelOutput:
    """Run the network on a normalized (H, W, 5) input."""
    if x.data.ndim != 3 or x.data.shape[-1] != IN_CHANNELS:
        raise ValueError(
            f"forward: expected (H, W, {IN_CHANNELS}) input, got {x.data.shape}"
        )
    h = x
    for layer in range(N_HIDDEN):
        h = relu(conv2d(h, params.weights[layer], params.biases[layer]))
    head = conv2d(h, params.weights[N_HIDDEN], params.biases[N_HIDDEN])
    n = params.n_superpixels
    logits = channel_slice(head, 0, n)
    recon = channel_slice(head, n, n + RECON_CHANNELS)
    p = softmax_channels(instance_norm(logits, eps=INSTANCE_NORM_EPS))
    return ModelOutput(logits_p=logits, p=p, recon=recon)


@dataclass
class AdamState:
    """Per-parameter Adam moment buffers and shared hyperparameters."""

    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def init_adam(params: ModelParams, learning_rate: float = 0.01) -> AdamState:
    state = AdamState(learning_rate=learning_rate)
    for p in params.parameters():
        state.m.append(np.zeros_like(p.data))
        state.v.append(np.zeros_like(p.data))
    return state


def adam_step(params: ModelParams, state: AdamState):
    """One bias-corrected Adam update, in place on the parameter data."""
    tensors = params.parameters()
    for p in tensors:
        if p.grad is None:
            raise ValueError("adam_step: parameter has no gradient; run backward first")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    step = state.learning_rate / bc1
    for p, m, v in zip(tensors, state.m, state.v):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += state.eps
        p.data -= step * m / denom
