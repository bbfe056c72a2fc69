"""Adam optimizer over Parameter lists."""

from __future__ import annotations

import numpy as np

from .layers import Parameter


class Adam:
    """Adaptive moment estimation with bias correction.

    Update per step t:
        m <- beta1 m + (1 - beta1) g
        v <- beta2 v + (1 - beta2) g^2
        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(
        self,
        params: list[Parameter],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        # scratch buffers so the update makes no per-step allocations
        self._buf = [np.empty_like(p.value) for p in params]
        self._den = [np.empty_like(p.value) for p in params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g, m, v = p.grad, self.m[i], self.v[i]
            buf, den = self._buf[i], self._den[i]
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=buf)
            m += buf
            v *= self.beta2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - self.beta2
            v += buf
            np.divide(v, c2, out=den)
            np.sqrt(den, out=den)
            den += self.eps
            np.divide(m, den, out=buf)
            buf *= self.lr / c1
            p.value -= buf

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
