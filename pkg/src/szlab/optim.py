"""Adam and RMSprop, as in-place update rules plus small optimizer objects."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    name: str = "adam"


@dataclass(frozen=True)
class RMSpropConfig:
    lr: float = 1e-4
    rho: float = 0.9
    eps: float = 1e-7
    decay: float = 1e-6
    name: str = "rmsprop"


def adam_step(param: np.ndarray, grad: np.ndarray, slots: dict, t: int, hyper: AdamConfig = AdamConfig()):
    """One bias-corrected Adam update, applied in place. ``t`` counts from 1."""
    if t < 1:
        raise ValueError("adam step counter starts at 1")
    m = slots.setdefault("m", np.zeros_like(param))
    v = slots.setdefault("v", np.zeros_like(param))
    m *= hyper.beta1
    m += (1.0 - hyper.beta1) * grad
    v *= hyper.beta2
    v += (1.0 - hyper.beta2) * (grad * grad)
    m_hat = m / (1.0 - hyper.beta1 ** t)
    v_hat = v / (1.0 - hyper.beta2 ** t)
    param -= (hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)).astype(param.dtype, copy=False)
    return param, slots


def rmsprop_step(param: np.ndarray, grad: np.ndarray, slots: dict, iteration: int,
                 hyper: RMSpropConfig = RMSpropConfig()):
    """One RMSprop update in place.

    ``iteration`` is the number of updates already taken; the learning rate
    decays as ``lr / (1 + decay * iteration)``.
    """
    v = slots.setdefault("v", np.zeros_like(param))
    v *= hyper.rho
    v += (1.0 - hyper.rho) * (grad * grad)
    lr_t = hyper.lr / (1.0 + hyper.decay * iteration)
    param -= (lr_t * grad / (np.sqrt(v) + hyper.eps)).astype(param.dtype, copy=False)
    return param, slots


class Optimizer:
    def __init__(self, hyper):
        self.hyper = hyper
        self.iterations = 0
        self.slots: dict[tuple[int, str], dict] = {}

    def step(self, layers):
        """Update every parameter of ``layers`` from the gradients they hold."""
        self.iterations += 1
        for li, layer in enumerate(layers):
            grads = layer.grads()
            for name, p in layer.params().items():
                g = grads[name]
                if g is None:
                    continue
                self._update(p, g, self.slots.setdefault((li, name), {}))

    def _update(self, p, g, slots):
        raise NotImplementedError


class Adam(Optimizer):
    def __init__(self, hyper: AdamConfig = AdamConfig()):
        super().__init__(hyper)

    def _update(self, p, g, slots):
        adam_step(p, g, slots, self.iterations, self.hyper)


class RMSprop(Optimizer):
    def __init__(self, hyper: RMSpropConfig = RMSpropConfig()):
        super().__init__(hyper)

    def _update(self, p, g, slots):
        rmsprop_step(p, g, slots, self.iterations - 1, self.hyper)


def make_optimizer(hyper) -> Optimizer:
    if isinstance(hyper, AdamConfig):
        return Adam(hyper)
    if isinstance(hyper, RMSpropConfig):
        return RMSprop(hyper)
    raise TypeError(f"unsupported optimizer config {hyper!r}")
