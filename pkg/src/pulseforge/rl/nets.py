"""Dense networks with hand-written backprop, and the Adam rule.

Everything is plain numpy so runs are bit-reproducible under a fixed seed
and a single thread.  float32 is the working precision; float64 exists for
finite-difference gradient verification.
"""

from __future__ import annotations

import numpy as np

__all__ = ["MLP", "Adam", "mse_loss"]

_ACTIVATIONS = ("relu", "tanh", "linear")


class MLP:
    """Fully connected net: rectifier hidden layers, configurable output.

    Weights and biases start from the fan-in uniform rule
    U(-1/sqrt(n_in), 1/sqrt(n_in)); ``final_bound`` overrides the last
    layer's range (policy heads start near zero so early actions are pure
    exploration noise).
    """

    def __init__(
        self,
        sizes: tuple[int, ...],
        out_activation: str = "linear",
        final_bound: float | None = None,
        dtype=np.float32,
        seed: int = 0,
    ):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        if out_activation not in _ACTIVATIONS:
            raise ValueError(f"out_activation must be one of {_ACTIVATIONS}")
        self.sizes = tuple(int(s) for s in sizes)
        self.out_activation = out_activation
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        last = len(sizes) - 2
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)
            if k == last and final_bound is not None:
                bound = final_bound
            self.weights.append(
                rng.uniform(-bound, bound, (n_in, n_out)).astype(self.dtype)
            )
            self.biases.append(rng.uniform(-bound, bound, n_out).astype(self.dtype))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Live references, ordered W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MLP":
        clone = object.__new__(MLP)
        clone.sizes = self.sizes
        clone.out_activation = self.out_activation
        clone.dtype = self.dtype
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Returns the output and the cache that backward() consumes."""
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        cache = [x]
        h = x
        for k in range(self.n_layers):
            z = h @ self.weights[k] + self.biases[k]
            if k < self.n_layers - 1:
                h = np.maximum(z, 0.0)
            elif self.out_activation == "tanh":
                h = np.tanh(z)
            elif self.out_activation == "relu":
                h = np.maximum(z, 0.0)
            else:
                h = z
            cache.append(h)
        if squeeze:
            return h[0], cache
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self, cache: list, grad_out: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Backpropagate dL/dout; returns (parameter grads, dL/dinput).

        The parameter grads are ordered like :meth:`parameters`.
        """
        g = np.asarray(grad_out, dtype=self.dtype)
        if g.ndim == 1:
            g = g[None, :]
        grads: list[np.ndarray] = [None] * (2 * self.n_layers)
        for k in range(self.n_layers - 1, -1, -1):
            h_out = cache[k + 1]
            if k < self.n_layers - 1 or self.out_activation == "relu":
                g = g * (h_out > 0)
            elif self.out_activation == "tanh":
                g = g * (1.0 - h_out * h_out)
            h_in = cache[k]
            grads[2 * k] = h_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
        return grads, g

    # -- serialization ---------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for k in range(self.n_layers):
            out[f"w{k}"] = self.weights[k]
            out[f"b{k}"] = self.biases[k]
        return out

    def load_state_dict(self, state: dict) -> None:
        for k in range(self.n_layers):
            w = np.asarray(state[f"w{k}"], dtype=self.dtype)
            b = np.asarray(state[f"b{k}"], dtype=self.dtype)
            if w.shape != self.weights[k].shape or b.shape != self.biases[k].shape:
                raise ValueError(f"layer {k} shape mismatch: {w.shape} vs {self.weights[k].shape}")
            # in-place copy keeps optimizer parameter references alive
            self.weights[k][...] = w
            self.biases[k][...] = b


class Adam:
    """Adam with the standard (0.9, 0.999) moment rates and 1e-8 epsilon."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_dict(self) -> dict:
        out = {"t": np.asarray(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for i in range(len(self.params)):
            self.m[i] = np.asarray(state[f"m{i}"], dtype=self.params[i].dtype)
            self.v[i] = np.asarray(state[f"v{i}"], dtype=self.params[i].dtype)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.atleast_1d(pred)
    target = np.atleast_1d(target)
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff
