"""
Optimizers over model parameters.

State is kept per Parameter, so tied projections only ever see updates of
their free (a, b) blocks.
"""

from typing import Dict, List

import numpy as np

from autodiff.tensor import Parameter


class Optimizer:
    def __init__(self, params: List[Parameter]):
        self.params = [p for p in params if p.trainable]
        self.t = 0

    def step(self, lr: float):
        raise NotImplementedError

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {}


class AdamW(Optimizer):
    """Adaptive moments with weight decay applied directly to matrix-shaped weights"""

    def __init__(self, params: List[Parameter], beta1: float = 0.9, beta2: float = 0.95,
                 eps: float = 1e-8, weight_decay: float = 0.1):
        super().__init__(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t

        for p, m, v in zip(self.params, self.m, self.v):
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g

            if self.weight_decay and p.ndim >= 2:
                p.data *= 1.0 - lr * self.weight_decay
            update = lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            p.data -= update.astype(p.dtype, copy=False)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        state = {}
        for p, m, v in zip(self.params, self.m, self.v):
            state[f'{p.name}.m'] = m
            state[f'{p.name}.v'] = v
        return state


OPTIMIZERS = {
    'adamw': AdamW,
}


def build_optimizer(cfg, params: List[Parameter]) -> Optimizer:
    """Optimizer named by cfg.optimizer, configured from the TrainConfig"""
    if cfg.optimizer == 'adamw':
        return AdamW(params, beta1=cfg.beta1, beta2=cfg.beta2,
                     eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
    return OPTIMIZERS[cfg.optimizer](params)
