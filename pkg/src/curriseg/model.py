"""Small fully-convolutional scorer with exact analytic gradients and Adam.

Three 3x3 convolutions (1 -> 8 -> 8 -> 1 channels, stride 1, zero padding 1)
with ReLU between them; the output is a logit map the same size as the input.
Gradients are hand-derived reverse mode and are verified against central
finite differences in the tests. Batched entry points take (N, H, W) arrays;
the Grid2D wrappers handle the single-image contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid2D, SeededRng

__all__ = [
    "CHANNELS",
    "KERNEL",
    "PARAM_COUNT",
    "ConvNetParams",
    "AdamState",
    "init_params",
    "zero_params",
    "forward",
    "backward",
    "forward_values",
    "forward_cached",
    "backward_cached",
    "adam_init",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]

CHANNELS = (1, 8, 8, 1)
KERNEL = 3
_PAD = 1
PARAM_COUNT = sum(
    CHANNELS[i] * CHANNELS[i + 1] * KERNEL * KERNEL + CHANNELS[i + 1]
    for i in range(3)
)


@dataclass(frozen=True)
class ConvNetParams:
    """All weights and biases of the scorer, finite float64, immutable."""

    weights: tuple
    biases: tuple

    def __post_init__(self):
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ValueError("expected exactly three layers")
        ws, bs = [], []
        for i in range(3):
            w = np.array(self.weights[i], dtype=np.float64)
            b = np.array(self.biases[i], dtype=np.float64)
            expect_w = (CHANNELS[i + 1], CHANNELS[i], KERNEL, KERNEL)
            if w.shape != expect_w:
                raise ValueError(f"layer {i+1} weights must be {expect_w}, got {w.shape}")
            if b.shape != (CHANNELS[i + 1],):
                raise ValueError(f"layer {i+1} bias must be ({CHANNELS[i+1]},), got {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters must be finite")
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    def arrays(self) -> tuple:
        """The six parameter arrays in a fixed order (w1, b1, w2, b2, w3, b3)."""
        return (self.weights[0], self.biases[0], self.weights[1],
                self.biases[1], self.weights[2], self.biases[2])

    def to_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, flat) -> "ConvNetParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != PARAM_COUNT:
            raise ValueError(f"expected {PARAM_COUNT} values, got {flat.size}")
        ws, bs, pos = [], [], 0
        for i in range(3):
            wshape = (CHANNELS[i + 1], CHANNELS[i], KERNEL, KERNEL)
            n = int(np.prod(wshape))
            ws.append(flat[pos : pos + n].reshape(wshape))
            pos += n
            bs.append(flat[pos : pos + CHANNELS[i + 1]])
            pos += CHANNELS[i + 1]
        return cls(tuple(ws), tuple(bs))

    def count(self) -> int:
        return PARAM_COUNT


def init_params(rng: SeededRng) -> ConvNetParams:
    """Uniform +-sqrt(6/(fan_in+fan_out)) kernels, zero biases."""
    gen = rng.generator()
    ws, bs = [], []
    for i in range(3):
        fan_in = CHANNELS[i] * KERNEL * KERNEL
        fan_out = CHANNELS[i + 1] * KERNEL * KERNEL
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        shape = (CHANNELS[i + 1], CHANNELS[i], KERNEL, KERNEL)
        ws.append(gen.uniform(-bound, bound, size=shape))
        bs.append(np.zeros(CHANNELS[i + 1]))
    return ConvNetParams(tuple(ws), tuple(bs))


def zero_params() -> ConvNetParams:
    return ConvNetParams.from_flat(np.zeros(PARAM_COUNT))


def _pad(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * _PAD, w + 2 * _PAD))
    out[:, :, _PAD : _PAD + h, _PAD : _PAD + w] = x
    return out


def _conv(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 same-size convolution of (N, Cin, H, W) with (Cout, Cin, 3, 3)."""
    n, _, h, wd = x.shape
    xp = _pad(x)
    acc = np.zeros((n, h, wd, w.shape[0]))
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            xs = xp[:, :, dy : dy + h, dx : dx + wd]
            acc += np.tensordot(xs, w[:, :, dy, dx], axes=([1], [1]))
    return acc.transpose(0, 3, 1, 2) + b[None, :, None, None]


def _conv_backward(x: np.ndarray, w: np.ndarray, g: np.ndarray,
                   need_gx: bool = True):
    """Gradients of a scalar loss through _conv: returns (dx, dw, db).

    dx is the full correlation of g with the kernel flipped in both spatial
    axes, which avoids a scatter-add into a padded buffer.
    """
    n, cin, h, wd = x.shape
    xp = _pad(x)
    gw = np.zeros_like(w)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            xs = xp[:, :, dy : dy + h, dx : dx + wd]
            gw[:, :, dy, dx] = np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))
    gb = g.sum(axis=(0, 2, 3))
    gx = None
    if need_gx:
        gp = _pad(g)
        acc = np.zeros((n, h, wd, cin))
        for dy in range(KERNEL):
            for dx in range(KERNEL):
                gs = gp[:, :, dy : dy + h, dx : dx + wd]
                acc += np.tensordot(gs, w[:, :, KERNEL - 1 - dy, KERNEL - 1 - dx],
                                    axes=([1], [0]))
        gx = acc.transpose(0, 3, 1, 2)
    return gx, gw, gb


def forward_cached(params: ConvNetParams, images: np.ndarray):
    """Batched forward pass; returns (logits (N,H,W), cache for backward)."""
    if images.ndim != 3:
        raise ValueError(f"expected (N, H, W) images, got shape {images.shape}")
    if images.shape[1] < 3 or images.shape[2] < 3:
        raise ValueError("images must be at least 3x3")
    x0 = images[:, None, :, :].astype(np.float64, copy=False)
    a1 = _conv(x0, params.weights[0], params.biases[0])
    h1 = np.maximum(a1, 0.0)
    a2 = _conv(h1, params.weights[1], params.biases[1])
    h2 = np.maximum(a2, 0.0)
    a3 = _conv(h2, params.weights[2], params.biases[2])
    logits = a3[:, 0, :, :]
    return logits, (x0, a1, h1, a2, h2)


def backward_cached(params: ConvNetParams, cache, grad_logits: np.ndarray) -> ConvNetParams:
    """Exact parameter gradients from a cached forward pass."""
    x0, a1, h1, a2, h2 = cache
    if grad_logits.shape != (x0.shape[0], x0.shape[2], x0.shape[3]):
        raise ValueError(
            f"loss gradient shape {grad_logits.shape} does not match "
            f"forward output {(x0.shape[0], x0.shape[2], x0.shape[3])}"
        )
    g3 = grad_logits[:, None, :, :].astype(np.float64, copy=False)
    gh2, gw3, gb3 = _conv_backward(h2, params.weights[2], g3)
    ga2 = gh2 * (a2 > 0.0)
    gh1, gw2, gb2 = _conv_backward(h1, params.weights[1], ga2)
    ga1 = gh1 * (a1 > 0.0)
    _, gw1, gb1 = _conv_backward(x0, params.weights[0], ga1, need_gx=False)
    return ConvNetParams((gw1, gw2, gw3), (gb1, gb2, gb3))


def forward_values(params: ConvNetParams, images: np.ndarray) -> np.ndarray:
    """Batched logits without keeping the cache."""
    logits, _ = forward_cached(params, images)
    return logits


def forward(params: ConvNetParams, image: Grid2D) -> Grid2D:
    """Logit map for one image; spatial size is preserved."""
    return Grid2D(forward_values(params, image.values[None, :, :])[0])


def backward(params: ConvNetParams, image: Grid2D, loss_grad_wrt_logits: Grid2D) -> ConvNetParams:
    """Exact gradients for one image; recomputes the forward pass internally."""
    _, cache = forward_cached(params, image.values[None, :, :])
    return backward_cached(params, cache, loss_grad_wrt_logits.values[None, :, :])


@dataclass(frozen=True)
class AdamState:
    """Adam accumulators mirroring the parameter arrays, plus the step count."""

    m: tuple
    v: tuple
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3


def adam_init(params: ConvNetParams, lr: float = 1e-3) -> AdamState:
    zeros = tuple(np.zeros_like(a) for a in params.arrays())
    return AdamState(m=zeros, v=tuple(np.zeros_like(a) for a in params.arrays()),
                     step=0, lr=lr)


def adam_step(params: ConvNetParams, grads: ConvNetParams, state: AdamState,
              lr: float | None = None):
    """One bias-corrected Adam update; pure, returns (params, state)."""
    if lr is None:
        lr = state.lr
    t = state.step + 1
    new_arrays, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m1 = state.beta1 * m + (1.0 - state.beta1) * g
        v1 = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m1 / (1.0 - state.beta1 ** t)
        v_hat = v1 / (1.0 - state.beta2 ** t)
        new_arrays.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m1)
        new_v.append(v1)
    new_params = ConvNetParams(
        (new_arrays[0], new_arrays[2], new_arrays[4]),
        (new_arrays[1], new_arrays[3], new_arrays[5]),
    )
    new_state = replace(state, m=tuple(new_m), v=tuple(new_v), step=t)
    return new_params, new_state


# ---------------------------------------------------------------------------
# Checkpoint format: JSON with an architecture descriptor, the optimizer step
# count, and each layer's weights/bias as nested lists. Floats round-trip
# exactly (json uses shortest-repr doubles).

_CHECKPOINT_FORMAT = "curriseg-checkpoint-v1"


def save_checkpoint(path, params: ConvNetParams, step: int = 0) -> None:
    doc = {
        "format": _CHECKPOINT_FORMAT,
        "architecture": {"kernel": KERNEL, "padding": _PAD, "channels": list(CHANNELS)},
        "step": int(step),
        "layers": [
            {"weights": params.weights[i].tolist(), "bias": params.biases[i].tolist()}
            for i in range(3)
        ],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Read a checkpoint; returns (params, step)."""
    with open(path, encoding="ascii") as fh:
        doc = json.load(fh)
    if doc.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"unrecognized checkpoint format in {path}")
    arch = doc.get("architecture", {})
    if tuple(arch.get("channels", ())) != CHANNELS or arch.get("kernel") != KERNEL:
        raise ValueError(f"checkpoint architecture mismatch in {path}")
    layers = doc["layers"]
    params = ConvNetParams(
        tuple(np.array(layer["weights"]) for layer in layers),
        tuple(np.array(layer["bias"]) for layer in layers),
    )
    return params, int(doc["step"])
