"""Adam optimizer over named parameter tensors."""

import numpy as np

from .errors import OptimizerError
from .tensor import Tensor


class Adam:
    """Standard Adam with bias correction; one shared step counter.

    Parameters with no gradient (grad is None) are left untouched and their
    moments are not decayed, so an all-None step is a no-op.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 2e-4,
                 betas: tuple[float, float] = (0.5, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise OptimizerError(f"learning rate must be positive, got {lr}")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if np.isnan(g).any():
                raise OptimizerError(f"NaN gradient for parameter '{name}' at step {self.t}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = np.sqrt(v / c2)
            update += self.eps
            np.divide(m / c1, update, out=update)
            update *= self.lr
            p.data -= update.astype(p.data.dtype, copy=False)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat named view of moments + step counter, for checkpointing."""
        out = {"t": np.array(self.t, dtype=np.int64)}
        for k in self.params:
            out[f"m.{k}"] = self.m[k]
            out[f"v.{k}"] = self.v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.t = int(arrays["t"])
        for k in self.params:
            self.m[k] = np.ascontiguousarray(arrays[f"m.{k}"])
            self.v[k] = np.ascontiguousarray(arrays[f"v.{k}"])
