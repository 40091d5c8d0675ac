"""The lightweight novelty-detection head.

A 4-hidden-layer relu MLP maps detector features to an embedding z; a
bias-free projection vector w maps z to an id score nu = sigmoid(w.z).
Forward caches pre-activations so backward() can run plain backprop, with
the two gradient paths kept separate: the score path trains only w, the
embedding path trains only the hidden layers (unless full_backprop is
requested, as the plain binary-classifier baseline needs).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

NU_CLAMP = 1e-7                     # keep sigmoid outputs away from exact 0/1
CHECKPOINT_MAGIC = b"ONDM"
CHECKPOINT_VERSION = 1

MIXUP_OFF = "off"
MIXUP_INPUT = "input"
MIXUP_MANIFOLD = "manifold"


@dataclass
class RegularizerConfig:
    dropout_p: float = 0.0
    mixup: str = MIXUP_OFF
    mixup_mu: float = 0.5
    mixup_sigma: float = 0.2

    def validate(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.mixup_sigma < 0:
            raise ValueError("mixup_sigma must be >= 0")
        if self.mixup not in (MIXUP_OFF, MIXUP_INPUT, MIXUP_MANIFOLD):
            raise ValueError(f"unknown mixup mode {self.mixup!r}")


@dataclass
class NDModel:
    weights: list[np.ndarray]         # 4 matrices (fan_in, fan_out), float64
    biases: list[np.ndarray]
    w: np.ndarray                     # projection vector, length = last width
    input_mean: np.ndarray | None = None   # optional frozen input standardizer
    input_std: np.ndarray | None = None

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def widths(self) -> list[int]:
        return [W.shape[1] for W in self.weights]

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases + [self.w]

    def copy(self) -> "NDModel":
        return NDModel([W.copy() for W in self.weights],
                       [b.copy() for b in self.biases], self.w.copy(),
                       None if self.input_mean is None else self.input_mean.copy(),
                       None if self.input_std is None else self.input_std.copy())

    def param_distance(self, other: "NDModel") -> float:
        return float(sum(np.abs(a - b).sum()
                         for a, b in zip(self.params(), other.params())))


DEFAULT_WIDTHS = [512, 256, 128, 128]


def xavier_uniform(rng, fan_in, fan_out, shape):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_model(input_dim: int, widths=None, seed: int = 0) -> NDModel:
    """Xavier-uniform weights, zero biases, Xavier projection (fan_out 1)."""
    widths = list(widths) if widths is not None else list(DEFAULT_WIDTHS)
    if len(widths) != 4 or any(h < 1 for h in widths):
        raise ValueError("widths must be 4 positive layer sizes")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = input_dim
    for h in widths:
        weights.append(xavier_uniform(rng, fan_in, h, (fan_in, h)))
        biases.append(np.zeros(h))
        fan_in = h
    w = xavier_uniform(rng, widths[-1], 1, (widths[-1],))
    return NDModel(weights, biases, w)


@dataclass
class ForwardResult:
    z: np.ndarray                      # (N, H) penultimate activation
    nu: np.ndarray                     # (N,) clamped sigmoid(z @ w)
    inputs: list[np.ndarray] = field(default_factory=list)   # layer inputs
    masks: list = field(default_factory=list)                # dropout masks or None


def sigmoid(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sample_mixup_lambda(rng, reg: RegularizerConfig) -> float:
    return float(np.clip(rng.normal(reg.mixup_mu, reg.mixup_sigma), 0.0, 1.0))


def apply_mixup(batch: np.ndarray, labels: np.ndarray, reg: RegularizerConfig,
                rng=None, lam: float | None = None, perm: np.ndarray | None = None):
    """Convex blend of each sample with a permuted partner.

    Returns (mixed batch, mixed labels).  lam/perm may be pinned for tests;
    otherwise lam ~ N(mu, sigma^2) clamped to [0, 1] and perm is a random
    permutation.
    """
    if len(batch) < 2:
        raise ValueError("mixup needs a batch of at least 2 samples")
    if rng is None:
        rng = np.random.default_rng()
    if lam is None:
        lam = sample_mixup_lambda(rng, reg)
    if perm is None:
        perm = rng.permutation(len(batch))
    mixed = (1.0 - lam) * batch + lam * batch[perm]
    mixed_labels = (1.0 - lam) * labels + lam * labels[perm]
    return mixed, mixed_labels


def forward(model: NDModel, X: np.ndarray, mode: str = "eval",
            reg: RegularizerConfig | None = None, rng=None,
            labels: np.ndarray | None = None):
    """Run the net.  In train mode dropout uses inverted scaling and manifold
    mixup blends activations at a uniformly drawn hidden layer; eval mode is
    deterministic and ignores the regularizer.

    Returns (ForwardResult, labels) — labels pass through unchanged unless
    manifold mixup blended them.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise ValueError(f"feature dim {X.shape[1]} != model input dim {model.input_dim}")
    if model.input_mean is not None:
        X = (X - model.input_mean) / model.input_std
    reg = reg or RegularizerConfig()
    reg.validate()
    train = mode == "train"
    if train and rng is None:
        rng = np.random.default_rng()
    mix_layer = -1
    if train and reg.mixup == MIXUP_MANIFOLD and len(X) >= 2:
        mix_layer = int(rng.integers(0, len(model.weights)))
        lam = sample_mixup_lambda(rng, reg)
        perm = rng.permutation(len(X))

    a = X
    inputs, masks = [], []
    for li, (W, b) in enumerate(zip(model.weights, model.biases)):
        if li == mix_layer:
            a = (1.0 - lam) * a + lam * a[perm]
            if labels is not None:
                labels = (1.0 - lam) * labels + lam * labels[perm]
        inputs.append(a)
        a = np.maximum(a @ W + b, 0.0)
        if train and reg.dropout_p > 0.0:
            mask = (rng.random(a.shape) >= reg.dropout_p) / (1.0 - reg.dropout_p)
            a = a * mask
            masks.append(mask)
        else:
            masks.append(None)
    z = a
    nu = np.clip(sigmoid(z @ model.w), NU_CLAMP, 1.0 - NU_CLAMP)
    return ForwardResult(z=z, nu=nu, inputs=inputs, masks=masks), labels


def backward(model: NDModel, fwd: ForwardResult, dZ: np.ndarray | None = None,
             dnu: np.ndarray | None = None, dpre: np.ndarray | None = None,
             full_backprop: bool = False):
    """Backprop the two paths.

    dZ (gradient on the embedding) flows into the hidden layers and never
    into w; dnu (gradient on the score, or dpre given directly on w.z)
    flows only into w unless full_backprop is set, in which case it also
    propagates through z into the hidden layers (the no-stop-gradient
    baseline).

    Returns (weight grads, bias grads, w grad).
    """
    if not fwd.inputs:
        raise ValueError("forward cache missing")
    grad_w = np.zeros_like(model.w)
    delta = np.zeros_like(fwd.z) if dZ is None else np.asarray(dZ, dtype=float).copy()
    if dnu is not None:
        if dpre is not None:
            raise ValueError("pass dnu or dpre, not both")
        dpre = np.asarray(dnu, dtype=float) * fwd.nu * (1.0 - fwd.nu)   # d/d(w.z)
    if dpre is not None:
        dpre = np.asarray(dpre, dtype=float)
        grad_w = fwd.z.T @ dpre
        if full_backprop:
            delta = delta + np.outer(dpre, model.w)

    gW = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    for li in range(len(model.weights) - 1, -1, -1):
        act_in = fwd.inputs[li]
        if fwd.masks[li] is not None:
            delta = delta * fwd.masks[li]
        pre = act_in @ model.weights[li] + model.biases[li]
        delta = delta * (pre > 0)
        gW[li] = act_in.T @ delta
        gb[li] = delta.sum(axis=0)
        if li > 0:
            delta = delta @ model.weights[li].T
    return gW, gb, grad_w


def snap_to_f32(model: NDModel) -> NDModel:
    """Round parameters to float32 precision (kept as float64 in memory).

    Called before checkpointing so the 32-bit on-disk format reloads to
    bit-identical parameters and warm starts match resume-from-disk.
    """
    def snap(a):
        return None if a is None else a.astype(np.float32).astype(float)

    return NDModel([snap(W) for W in model.weights],
                   [snap(b) for b in model.biases], snap(model.w),
                   snap(model.input_mean), snap(model.input_std))


def fit_standardizer(model: NDModel, X: np.ndarray):
    """Freeze a per-dimension input standardizer from the first training pool."""
    X = np.asarray(X, dtype=float)
    model.input_mean = X.mean(axis=0)
    model.input_std = X.std(axis=0) + 1e-8


# --- checkpoints -----------------------------------------------------------
#
# magic(4) | version u16 | D u32 | n_layers u32 | widths u32*n
# then each hidden layer's W (row-major) and b, then w, all f32 LE.


def save_checkpoint(model: NDModel, path):
    widths = model.widths
    has_std = model.input_mean is not None
    blob = struct.pack("<4sHIIB", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                       model.input_dim, len(widths), int(has_std))
    blob += struct.pack(f"<{len(widths)}I", *widths)
    arrays = list(model.params())
    if has_std:
        arrays += [model.input_mean, model.input_std]
    for arr in arrays:
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path) -> NDModel:
    with open(path, "rb") as f:
        blob = f.read()
    magic, version, D, n_layers, has_std = struct.unpack_from("<4sHIIB", blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = struct.calcsize("<4sHIIB")
    widths = list(struct.unpack_from(f"<{n_layers}I", blob, off))
    off += 4 * n_layers
    weights, biases = [], []
    fan_in = D
    for h in widths:
        weights.append(np.frombuffer(blob, "<f4", fan_in * h, off)
                       .astype(float).reshape(fan_in, h))
        off += 4 * fan_in * h
        fan_in = h
    for h in widths:
        biases.append(np.frombuffer(blob, "<f4", h, off).astype(float))
        off += 4 * h
    w = np.frombuffer(blob, "<f4", widths[-1], off).astype(float)
    off += 4 * widths[-1]
    mean = std = None
    if has_std:
        mean = np.frombuffer(blob, "<f4", D, off).astype(float)
        std = np.frombuffer(blob, "<f4", D, off + 4 * D).astype(float)
    return NDModel(weights, biases, w, mean, std)
