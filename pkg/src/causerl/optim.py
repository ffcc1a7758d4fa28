"""AdamW with decoupled weight decay.

The update for each parameter p with gradient g:

    m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
    mhat = m / (1 - b1^t)         vhat = v / (1 - b2^t)
    p <- p - lr * (mhat / (sqrt(vhat) + eps) + wd * p)

Constants default to (0.9, 0.999, 1e-8, wd 0.01).
"""

import numpy as np

from causerl.errors import ShapeMismatchError
from causerl.tensor import Tensor


class AdamW:
    def __init__(self, params: list[Tensor], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        seen = set()
        self.params = []
        for p in params:
            if id(p) not in seen:
                seen.add(id(p))
                self.params.append(p)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def contains(self, p: Tensor) -> bool:
        return any(q is p for q in self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None or g.shape != p.data.shape:
                raise ShapeMismatchError(
                    f"gradient missing or mis-shaped for parameter {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= self.lr * update
