"""Optimizers and learning-rate schedules for the two training recipes.

The contrastive recipe uses SGD with a linear 0.01 -> 0.005 warmup followed
by cosine annealing to 0 over a fixed 25 epochs; the plain BCE recipe uses
Adam at 0.0005 with cosine annealing and early stopping (window 5).  At
incremental sessions the base lr drops by 10x, warmup is skipped and the
epoch count is fixed (15 contrastive / 5 BCE).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

METHOD_ICONP = "iconp"
METHOD_IBCE = "ibce"


@dataclass
class TrainConfig:
    method: str = METHOD_ICONP
    batch_size: int = 512
    base_lr: float = 0.005              # post-warmup lr for iconp, Adam lr for ibce
    warmup_lr: float = 0.01
    epochs: int = 25
    warmup_epochs: int = 10
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stopping_window: int = 5
    validation_fraction: float = 0.1
    incremental_lr_factor: float = 10.0
    incremental_epochs: int = 15
    tau: float = 0.1
    dropout_p: float = 0.0
    mixup: str = "off"
    seed: int = 0

    def validate(self):
        if self.method not in (METHOD_ICONP, METHOD_IBCE):
            raise ValueError(f"unknown method {self.method!r}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be > 0")
        if self.epochs < 1 or self.incremental_epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.early_stopping_window < 1:
            raise ValueError("early_stopping_window must be >= 1")

    @classmethod
    def for_method(cls, method: str, **overrides) -> "TrainConfig":
        defaults = dict(method=method)
        if method == METHOD_IBCE:
            defaults.update(base_lr=0.0005, warmup_epochs=0, epochs=60,
                            incremental_epochs=5)
        defaults.update(overrides)
        cfg = cls(**defaults)
        cfg.validate()
        return cfg

    def incremental(self) -> "TrainConfig":
        """Schedule for sessions after the first: lr/10, no warmup, fixed epochs."""
        return replace(self, base_lr=self.base_lr / self.incremental_lr_factor,
                       warmup_epochs=0, epochs=self.incremental_epochs)

    def to_file(self, path):
        with open(path, "w") as f:
            for fld in fields(self):
                f.write(f"{fld.name}={getattr(self, fld.name)}\n")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        kwargs = {}
        types = {fld.name: fld.type for fld in fields(cls)}
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#") or "=" not in line:
                    continue
                key, val = line.split("=", 1)
                key = key.strip()
                if key not in types:
                    raise ValueError(f"unknown config key {key!r}")
                t = types[key]
                if t == "int":
                    kwargs[key] = int(val)
                elif t == "float":
                    kwargs[key] = float(val)
                else:
                    kwargs[key] = val.strip()
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Learning rate for the given epoch: linear warmup (if any) from
    warmup_lr down to base_lr, then cosine from base_lr to 0 over the rest.
    """
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} out of range [0, {cfg.epochs})")
    warm = cfg.warmup_epochs if cfg.method == METHOD_ICONP else 0
    if epoch < warm:
        return cfg.warmup_lr + (cfg.base_lr - cfg.warmup_lr) * epoch / warm
    span = cfg.epochs - warm
    t = epoch - warm
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * t / span))


class SGD:
    """SGD with classical momentum: v <- m*v + g; p <- p - lr*v."""

    def __init__(self, params: list[np.ndarray], momentum: float = 0.9):
        self.params = params
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr: float):
        for p, g, v in zip(self.params, grads, self.velocity):
            if p.shape != g.shape:
                raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
            v *= self.momentum
            v += g
            p -= lr * v


class Adam:
    """Standard bias-corrected Adam."""

    def __init__(self, params: list[np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray], lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


def sgd_step(params, grads, state, lr, momentum=0.9):
    """Functional single step; state is the velocity list (or None)."""
    if state is None:
        state = [np.zeros_like(p) for p in params]
    new_state, new_params = [], []
    for p, g, v in zip(params, grads, state):
        if p.shape != g.shape:
            raise ValueError("shape mismatch")
        v = momentum * v + g
        new_params.append(p - lr * v)
        new_state.append(v)
    return new_params, new_state


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, t=1):
    """Functional single Adam step; state is (m, v) lists (or None); t >= 1."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if state is None:
        state = ([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    ms, vs = state
    new_m, new_v, new_params = [], [], []
    for p, g, m, v in zip(params, grads, ms, vs):
        if p.shape != g.shape:
            raise ValueError("shape mismatch")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        new_params.append(p - lr * mhat / (np.sqrt(vhat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, (new_m, new_v)


def early_stop_check(history: list[float], window: int):
    """Stop once the best validation loss is `window` or more epochs old.

    Returns (stop, best_epoch).
    """
    if not history:
        raise ValueError("history is empty")
    best = int(np.argmin(history))
    stop = (len(history) - 1 - best) >= window
    return stop, best
