"""Adam with bias correction; parameters are updated in place."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class Adam:
    """Moment estimates live in the optimizer, shaped like the parameters.

    Update per step t (after t <- t+1):
        m <- b1*m + (1-b1)*g        mhat = m / (1 - b1^t)
        v <- b2*v + (1-b2)*g^2      vhat = v / (1 - b2^t)
        p <- p - lr * mhat / (sqrt(vhat) + eps)
    """

    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ShapeMismatch(f"{len(params)} params vs {len(grads)} grads")
        for p, g in zip(params, grads):
            if g is None or p.shape != g.shape:
                raise ShapeMismatch(
                    f"param shape {p.shape} vs grad shape {None if g is None else g.shape}"
                )
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        elif len(self.m) != len(params) or any(
            m.shape != p.shape for m, p in zip(self.m, params)
        ):
            raise ShapeMismatch("optimizer state does not match parameter list")

        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
