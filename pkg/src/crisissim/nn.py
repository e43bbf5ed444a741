"""Small fully-connected network core with hand-written reverse-mode gradients.

Everything runs in float64 on numpy. The networks here are tiny (tens of
thousands of parameters at most), so reproducibility and testability win over
speed: every gradient in this package is checkable against central finite
differences, and the same seed always produces the same parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MLP",
    "Adam",
    "softmax",
    "log_softmax",
    "logsumexp",
]


def logsumexp(z: np.ndarray, axis: int = -1, keepdims: bool = False) -> np.ndarray:
    m = np.max(z, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(z - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - np.max(z, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    return z - logsumexp(z, axis=axis, keepdims=True)


class MLP:
    """Feed-forward net: linear layers with tanh hidden activations, linear output.

    Parameters live in ``self.weights`` / ``self.biases`` (float64). ``forward``
    returns a cache that ``backward`` consumes; parameter gradients come back in
    the same layout as the parameters. ``get_flat``/``set_flat`` expose a single
    flat vector for optimizers, checkpoints and finite-difference checks. The
    flat layout is W0, b0, W1, b1, ... with each W stored row-major
    (fan_in, fan_out); checkpoints record this as layout version 1.
    """

    LAYOUT_VERSION = 1

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator,
                 out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least an input and an output size")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fi, fo) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = 1.0 / np.sqrt(fi)
            if i == len(self.sizes) - 2:
                scale *= out_scale
            self.weights.append(rng.normal(0.0, scale, size=(fi, fo)))
            self.biases.append(np.zeros(fo))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Run the net on a batch (n, d_in); returns (output, cache).

        The cache holds the layer inputs (post-activation of the previous
        layer) needed by ``backward``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.tanh(z)
            cache.append(h)
        return h, cache

    def backward(self, cache: list[np.ndarray], grad_out: np.ndarray
                 ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Backpropagate grad_out (n, d_out) through the cached forward pass.

        Returns (weight grads, bias grads, grad wrt the input batch).
        """
        grads_w = [np.zeros_like(w) for w in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]
        g = np.asarray(grad_out, dtype=np.float64)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            h_in = cache[i]
            if i != last:
                # cache[i + 1] is tanh(z); d tanh = 1 - tanh^2
                g = g * (1.0 - cache[i + 1] ** 2)
            grads_w[i] = h_in.T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads_w, grads_b, g

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} params, got {flat.size}")
        k = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[k:k + w.size].reshape(w.shape).copy()
            k += w.size
            self.biases[i] = flat[k:k + b.size].copy()
            k += b.size

    @staticmethod
    def flatten_grads(grads_w: list[np.ndarray], grads_b: list[np.ndarray]) -> np.ndarray:
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb.ravel())
        return np.concatenate(parts)


@dataclass
class Adam:
    """Adam on a flat parameter vector, optionally with decoupled weight decay.

    With ``weight_decay > 0`` the decay is applied directly to the parameters
    (AdamW style), not mixed into the gradient.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    t: int = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        new = params - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        if self.weight_decay > 0.0:
            new = new - self.lr * self.weight_decay * params
        return new
