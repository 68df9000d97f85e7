"""RMSProp parameter updates."""

import numpy as np


def rmsprop_step(params, lr: float, rho: float = 0.9, eps: float = 1e-7) -> None:
    """cache <- rho*cache + (1-rho)*g^2;  theta <- theta - lr*g/(sqrt(cache)+eps)."""
    for p in params:
        p.cache = rho * p.cache + (1.0 - rho) * p.grad * p.grad
        p.data -= lr * p.grad / (np.sqrt(p.cache) + eps)


class RMSProp:
    def __init__(self, params, lr: float, rho: float = 0.9, eps: float = 1e-7):
        self.params = list(params)
        self.lr = lr
        self.rho = rho
        self.eps = eps

    def step(self) -> None:
        rmsprop_step(self.params, self.lr, self.rho, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
