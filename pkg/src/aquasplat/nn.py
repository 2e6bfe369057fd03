"""Minimal numpy layers with explicit forward caches and backward passes."""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.01


class MissingCacheError(RuntimeError):
    """Backward called without a cached forward pass."""


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


class MLP:
    """Fully connected net, leaky-ReLU between layers, linear output.

    Parameters live in ``self.params`` as ``W0, b0, W1, b1, ...`` so the
    optimizer and checkpoint code can treat them as a flat named dict.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator, zero_last: bool = False):
        self.sizes = list(sizes)
        self.params: dict[str, np.ndarray] = {}
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            if last and zero_last:
                W = np.zeros((n_in, n_out))
            else:
                W = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
            self.params[f"W{i}"] = W
            self.params[f"b{i}"] = np.zeros(n_out)
        self._cache: list | None = None

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        cache = []
        h = x
        for i in range(self.n_layers):
            z = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            cache.append((h, z))
            h = z if i == self.n_layers - 1 else leaky_relu(z)
        if keep_cache:
            self._cache = cache
        return h

    def backward(self, dout: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Return ``dL/dx`` and parameter gradients for the last forward call."""
        if self._cache is None:
            raise MissingCacheError("MLP.backward called without a cached forward pass")
        grads: dict[str, np.ndarray] = {}
        g = dout
        for i in reversed(range(self.n_layers)):
            h, z = self._cache[i]
            if i != self.n_layers - 1:
                g = g * leaky_relu_grad(z)
            grads[f"W{i}"] = h.reshape(-1, h.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            grads[f"b{i}"] = g.reshape(-1, g.shape[-1]).sum(axis=0)
            g = g @ self.params[f"W{i}"].T
        return g, grads

    def preactivations(self) -> list[np.ndarray]:
        return [] if self._cache is None else [z for _, z in self._cache[:-1]]


def conv2d(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """'Same' 2-D convolution (cross-correlation), zero padded.

    ``x`` is ``(H, W, Cin)``, ``W`` is ``(kh, kw, Cin, Cout)``.
    """
    kh, kw = W.shape[:2]
    ph, pw = kh // 2, kw // 2
    H, Wd = x.shape[:2]
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    out = np.broadcast_to(b, (H, Wd, W.shape[3])).copy()
    for i in range(kh):
        for j in range(kw):
            out += xp[i:i + H, j:j + Wd] @ W[i, j]
    return out


def conv2d_backward(
    x: np.ndarray, W: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    kh, kw = W.shape[:2]
    ph, pw = kh // 2, kw // 2
    H, Wd = x.shape[:2]
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    dxp = np.zeros_like(xp)
    dW = np.empty_like(W)
    g2 = dout.reshape(-1, dout.shape[-1])
    for i in range(kh):
        for j in range(kw):
            patch = xp[i:i + H, j:j + Wd].reshape(-1, x.shape[-1])
            dW[i, j] = patch.T @ g2
            dxp[i:i + H, j:j + Wd] += dout @ W[i, j].T
    return dxp[ph:ph + H, pw:pw + Wd], dW, g2.sum(axis=0)


class ConvStack:
    """Two 3x3 convolutions with a leaky-ReLU in between."""

    def __init__(
        self, c_in: int, c_hidden: int, c_out: int, rng: np.random.Generator,
        out_bias: np.ndarray | None = None,
    ):
        self.params = {
            "W0": rng.normal(0.0, np.sqrt(2.0 / (9 * c_in)), size=(3, 3, c_in, c_hidden)),
            "b0": np.zeros(c_hidden),
            "W1": np.zeros((3, 3, c_hidden, c_out)),
            "b1": np.zeros(c_out) if out_bias is None else np.array(out_bias, dtype=np.float64),
        }
        self._cache = None

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        z0 = conv2d(x, self.params["W0"], self.params["b0"])
        h = leaky_relu(z0)
        out = conv2d(h, self.params["W1"], self.params["b1"])
        if keep_cache:
            self._cache = (x, z0, h)
        return out

    def backward(self, dout: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        if self._cache is None:
            raise MissingCacheError("ConvStack.backward called without a cached forward pass")
        x, z0, h = self._cache
        dh, dW1, db1 = conv2d_backward(h, self.params["W1"], dout)
        dz0 = dh * leaky_relu_grad(z0)
        dx, dW0, db0 = conv2d_backward(x, self.params["W0"], dz0)
        return dx, {"W0": dW0, "b0": db0, "W1": dW1, "b1": db1}

    def preactivations(self) -> list[np.ndarray]:
        return [] if self._cache is None else [self._cache[1]]
