from typing import Optional

import numpy as np

from ..errors import DivergenceError
from ..models import OptimizerSnapshot


class Adam:
    """Adam over one flat parameter vector.

    Refuses non-finite gradients instead of applying them.
    """

    def __init__(self, size: int, lr: float, beta1: float = 0.5, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, label: str = "params") -> np.ndarray:
        """Return the updated parameters; the input array is left untouched."""
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(
                f"non-finite gradient for {label} at optimizer step {self.t + 1}",
                {"optimizer_step": self.t + 1, "label": label, "non_finite": int(np.sum(~np.isfinite(grad)))},
            )
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        return params - (self.lr / bc1) * self.m / (np.sqrt(self.v / bc2) + self.epsilon)

    def snapshot(self) -> OptimizerSnapshot:
        return OptimizerSnapshot(m=self.m.copy(), v=self.v.copy(), t=self.t)

    def restore(self, snapshot: Optional[OptimizerSnapshot]) -> "Adam":
        if snapshot is not None:
            self.m = np.array(snapshot.m, dtype=np.float64)
            self.v = np.array(snapshot.v, dtype=np.float64)
            self.t = int(snapshot.t)
        return self
