"""Minimal dense-network substrate: tanh MLP, reverse-mode gradients, Adam.

Parameters live in one flat float64 vector; weight matrices and bias
vectors are views into it, so the flat and structured pictures can never
disagree. Everything the policy/value/regressor training needs, nothing
more.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PARAM_FILE_VERSION = 1


class Mlp:
    """Feedforward net: tanh hidden layers, identity output."""

    def __init__(self, layer_sizes, rng: np.random.Generator | None = None, out_gain: float = 0.01):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        n_params = sum(
            i * o + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )
        self._flat = np.zeros(n_params)
        self._rebuild_views()
        if rng is not None:
            self._init_orthogonal(rng, out_gain)

    def _rebuild_views(self):
        self.weights, self.biases = [], []
        off = 0
        for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(self._flat[off : off + i * o].reshape(i, o))
            off += i * o
            self.biases.append(self._flat[off : off + o])
            off += o

    def _init_orthogonal(self, rng, out_gain):
        for li, w in enumerate(self.weights):
            a = rng.normal(size=w.shape)
            q, r = np.linalg.qr(a if w.shape[0] >= w.shape[1] else a.T)
            q = q * np.sign(np.diag(r))
            if w.shape[0] < w.shape[1]:
                q = q.T
            gain = out_gain if li == len(self.weights) - 1 else 1.0
            w[:] = gain * q[: w.shape[0], : w.shape[1]]

    @property
    def params(self) -> np.ndarray:
        """The flat parameter vector (a live view; copy before mutating)."""
        return self._flat

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != self._flat.shape:
            raise ValueError(f"expected {self._flat.shape[0]} parameters, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise ValueError("non-finite parameters rejected")
        self._flat = flat.copy()
        self._rebuild_views()

    def n_params(self) -> int:
        return self._flat.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on (d,) or (N, d) input."""
        y, _ = self._forward_cached(np.asarray(x, dtype=float))
        return y

    def _forward_cached(self, x):
        squeeze = x.ndim == 1
        a = x[None, :] if squeeze else x
        if a.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"input width {a.shape[1]} != {self.layer_sizes[0]}")
        cache = [a]
        last = len(self.weights) - 1
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if li == last else np.tanh(z)
            cache.append(a)
        return (a[0] if squeeze else a), cache

    def gradient(self, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Flat parameter gradient of sum(output * upstream) over the batch."""
        x = np.asarray(x, dtype=float)
        upstream = np.asarray(upstream, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
            upstream = upstream[None, :]
        if upstream.shape != (x.shape[0], self.layer_sizes[-1]):
            raise ValueError(
                f"upstream shape {upstream.shape} != ({x.shape[0]}, {self.layer_sizes[-1]})"
            )
        _, cache = self._forward_cached(x)
        grad = np.zeros_like(self._flat)
        g_w, g_b = [], []
        g = upstream
        for li in range(len(self.weights) - 1, -1, -1):
            a_in = cache[li]
            if li != len(self.weights) - 1:
                g = g * (1.0 - cache[li + 1] ** 2)  # tanh'
            g_w.append(a_in.T @ g)
            g_b.append(g.sum(axis=0))
            g = g @ self.weights[li].T
        off = 0
        for w_grad, b_grad in zip(reversed(g_w), reversed(g_b)):
            grad[off : off + w_grad.size] = w_grad.ravel()
            off += w_grad.size
            grad[off : off + b_grad.size] = b_grad
            off += b_grad.size
        return grad


def forward(mlp: Mlp, x) -> np.ndarray:
    return mlp.forward(x)


def gradient(mlp: Mlp, x, upstream) -> np.ndarray:
    return mlp.gradient(x, upstream)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def fresh(n_params: int, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        return AdamState(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)


def adam_update(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """Textbook Adam with bias correction; pure (returns new arrays)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params/grads/state length mismatch")
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradient rejected")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)


def mlp_to_dict(mlp: Mlp) -> dict:
    """Bit-exact serializable form (hex floats)."""
    return {
        "version": PARAM_FILE_VERSION,
        "layer_sizes": list(mlp.layer_sizes),
        "params": [v.hex() for v in mlp.params],
    }


def mlp_from_dict(d: dict) -> Mlp:
    version = d.get("version", 0)
    if version > PARAM_FILE_VERSION:
        raise ValueError(f"parameter file version {version} newer than supported {PARAM_FILE_VERSION}")
    mlp = Mlp(d["layer_sizes"])
    mlp.set_params(np.array([float.fromhex(h) for h in d["params"]]))
    return mlp


def save_mlp(mlp: Mlp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mlp_to_dict(mlp)))


def load_mlp(path: str | Path) -> Mlp:
    return mlp_from_dict(json.loads(Path(path).read_text()))
