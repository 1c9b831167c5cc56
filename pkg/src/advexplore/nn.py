"""Small numpy neural-network toolkit: dense stacks, an LSTM cell, Adam.

Parameters live in flat ``dict[str, ndarray]`` containers so optimizers,
gradient clipping and checkpointing treat every network the same way.
Each forward pass returns a cache; the matching ``backward`` consumes it and
returns gradients with the same keys as ``params``.
"""

from __future__ import annotations

import numpy as np

Params = dict[str, np.ndarray]


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class MLP:
    """Fully connected stack, tanh on hidden layers, linear (or tanh) output."""

    def __init__(self, sizes, rng: np.random.Generator, out_tanh: bool = False):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.out_tanh = out_tanh
        self.params: Params = {}
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.params[f"W{i}"] = uniform_init(rng, n_in, (n_in, n_out))
            self.params[f"b{i}"] = uniform_init(rng, n_in, (n_out,))

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray):
        """Returns the output and the list of layer activations (input first)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {x.shape[-1]}")
        acts = [x]
        for i in range(self.n_layers):
            z = acts[-1] @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1 or self.out_tanh:
                z = np.tanh(z)
            acts.append(z)
        return acts[-1], acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, dy):
        """Gradients of a scalar loss given dL/d(output); returns (grads, dL/dx)."""
        grads: Params = {}
        d = dy
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1 or self.out_tanh:
                d = d * (1.0 - acts[i + 1] ** 2)
            a_in = acts[i]
            grads[f"W{i}"] = a_in.reshape(-1, a_in.shape[-1]).T @ d.reshape(-1, d.shape[-1])
            grads[f"b{i}"] = d.reshape(-1, d.shape[-1]).sum(axis=0)
            d = d @ self.params[f"W{i}"].T
        return grads, d


class LSTMCell:
    """Gated recurrent cell; gate blocks in W/b are ordered (input, forget, output, candidate)."""

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator):
        self.n_in = n_in
        self.n_hidden = n_hidden
        fan_in = n_in + n_hidden
        self.params: Params = {
            "W": uniform_init(rng, fan_in, (fan_in, 4 * n_hidden)),
            "b": uniform_init(rng, fan_in, (4 * n_hidden,)),
        }

    def initial_state(self, batch: int):
        z = np.zeros((batch, self.n_hidden))
        return z, z.copy()

    def step(self, x, state):
        h, c = state
        if x.shape[-1] != self.n_in or h.shape[-1] != self.n_hidden:
            raise ValueError("LSTM input/state width mismatch")
        n = self.n_hidden
        xh = np.concatenate([x, h], axis=-1)
        z = xh @ self.params["W"] + self.params["b"]
        i, f, o = sigmoid(z[..., :n]), sigmoid(z[..., n:2 * n]), sigmoid(z[..., 2 * n:3 * n])
        g = np.tanh(z[..., 3 * n:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return (h_new, c_new), (xh, i, f, o, g, c, tc)

    def forward(self, xs, state=None):
        """Run a (T, B, n_in) sequence; returns hidden states (T, B, n_hidden) and a cache."""
        if state is None:
            state = self.initial_state(xs.shape[1])
        hs, caches = [], []
        for x in xs:
            state, cache = self.step(x, state)
            hs.append(state[0])
            caches.append(cache)
        return np.stack(hs), caches

    def backward(self, caches, dhs):
        """Backprop through time over the whole cached window."""
        n = self.n_hidden
        W = self.params["W"]
        dW = np.zeros_like(W)
        db = np.zeros_like(self.params["b"])
        dxs = np.empty(dhs.shape[:-1] + (self.n_in,))
        dh_next = np.zeros_like(dhs[0])
        dc_next = np.zeros_like(dhs[0])
        for t in reversed(range(len(caches))):
            xh, i, f, o, g, c_prev, tc = caches[t]
            dh = dhs[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc**2)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dh * tc * o * (1.0 - o),
                dc * i * (1.0 - g**2),
            ], axis=-1)
            dW += xh.T @ dz
            db += dz.sum(axis=0)
            dxh = dz @ W.T
            dxs[t] = dxh[..., :self.n_in]
            dh_next = dxh[..., self.n_in:]
            dc_next = dc * f
        return {"W": dW, "b": db}, dxs


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))


def clip_grad_norm(grads: Params, max_norm: float) -> float:
    """Rescale ``grads`` in place so their global norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Bias-corrected Adam updating a parameter dict in place."""

    def __init__(self, params: Params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: Params) -> None:
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {k!r}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            self.params[k] -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def prefixed(prefix: str, params: Params) -> Params:
    return {f"{prefix}.{k}": v for k, v in params.items()}


def split_prefixed(prefix: str, flat: Params) -> Params:
    p = prefix + "."
    return {k[len(p):]: v for k, v in flat.items() if k.startswith(p)}


def save_params(path, params: Params) -> None:
    """Write an ``.npz`` archive; each array keeps its dtype and shape header."""
    with open(path, "wb") as f:
        np.savez(f, **params)


def load_params(path) -> Params:
    with np.load(path) as data:
        return {k: data[k].copy() for k in data.files}


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}
