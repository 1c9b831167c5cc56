"""Recurrent inverse dynamics model, its transition buffer and training step."""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass

import numpy as np

from . import nn


@dataclass
class Transition:
    x: np.ndarray
    a: np.ndarray
    x_next: np.ndarray
    terminal: bool = False


class SampleBuffer:
    """Append-only transition store backed by growable arrays.

    Transitions of one episode must be appended contiguously; each row remembers
    where its episode started so a recurrent model can replay the prefix.
    """

    def __init__(self, state_dim: int, action_dim: int, capacity: int = 1024):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._n = 0
        self._x = np.empty((capacity, state_dim))
        self._a = np.empty((capacity, action_dim))
        self._xn = np.empty((capacity, state_dim))
        self._term = np.empty(capacity, dtype=bool)
        self._start = np.empty(capacity, dtype=np.int64)
        self._episode_start = 0

    def __len__(self):
        return self._n

    def _grow(self, need):
        cap = len(self._x)
        if need <= cap:
            return
        new = max(need, 2 * cap)
        for name in ("_x", "_a", "_xn", "_term", "_start"):
            old = getattr(self, name)
            arr = np.empty((new,) + old.shape[1:], dtype=old.dtype)
            arr[:self._n] = old[:self._n]
            setattr(self, name, arr)

    def append(self, x, a, x_next, terminal=False):
        self._grow(self._n + 1)
        i = self._n
        self._x[i] = x
        self._a[i] = a
        self._xn[i] = x_next
        self._term[i] = terminal
        self._start[i] = self._episode_start
        self._n += 1
        if terminal:
            self._episode_start = self._n

    def add(self, tr: Transition):
        self.append(tr.x, tr.a, tr.x_next, tr.terminal)

    def extend_episodes(self, x, a, x_next, terminal):
        for row in zip(x, a, x_next, terminal):
            self.append(*row)

    def new_episode(self):
        """Mark the next append as an episode start even without a terminal flag."""
        self._episode_start = self._n

    def __getitem__(self, i) -> Transition:
        if not -self._n <= i < self._n:
            raise IndexError(i)
        i %= self._n
        return Transition(self._x[i].copy(), self._a[i].copy(), self._xn[i].copy(), bool(self._term[i]))

    @property
    def x(self):
        return self._x[:self._n]

    @property
    def a(self):
        return self._a[:self._n]

    @property
    def x_next(self):
        return self._xn[:self._n]

    @property
    def terminal(self):
        return self._term[:self._n]

    @property
    def start(self):
        return self._start[:self._n]

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([f"x{i}" for i in range(self.state_dim)]
                       + [f"a{i}" for i in range(self.action_dim)]
                       + [f"x_next{i}" for i in range(self.state_dim)] + ["terminal"])
            for i in range(self._n):
                w.writerow([repr(float(v)) for v in self._x[i]] + [repr(float(v)) for v in self._a[i]]
                           + [repr(float(v)) for v in self._xn[i]] + [int(self._term[i])])


@dataclass
class Batch:
    index: np.ndarray
    x: np.ndarray
    a: np.ndarray
    x_next: np.ndarray
    terminal: np.ndarray


def sample_uniform(buffer: SampleBuffer, n: int, rng: np.random.Generator) -> Batch:
    """``n`` i.i.d. uniform draws, with replacement."""
    if len(buffer) == 0:
        raise ValueError("cannot sample from an empty buffer")
    idx = rng.integers(0, len(buffer), size=n)
    return Batch(idx, buffer.x[idx], buffer.a[idx], buffer.x_next[idx], buffer.terminal[idx])


def action_loss(a, a_hat, beta: float = 1.0):
    """beta * ||a - a_hat||^2 over the last axis."""
    a = np.asarray(a, dtype=float)
    a_hat = np.asarray(a_hat, dtype=float)
    if a.shape != a_hat.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {a_hat.shape}")
    loss = beta * np.sum((a - a_hat) ** 2, axis=-1)
    return float(loss) if np.ndim(loss) == 0 else loss


class InverseModel:
    """â_t = head(LSTM(h_{t-1}, encoder([x_t; x_{t+1}])))."""

    def __init__(self, state_dim: int, action_dim: int, rng: np.random.Generator,
                 hidden: int = 256, recurrent: int = 256, n_layers: int = 3, beta: float = 1.0):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.beta = beta
        self.encoder = nn.MLP([2 * state_dim] + [hidden] * n_layers, rng, out_tanh=True)
        self.cell = nn.LSTMCell(hidden, recurrent, rng)
        self.head = nn.MLP([recurrent, action_dim], rng)
        self.params: nn.Params = {
            **nn.prefixed("enc", self.encoder.params),
            **nn.prefixed("lstm", self.cell.params),
            **nn.prefixed("head", self.head.params),
        }
        self.state = self.cell.initial_state(1)

    def reset(self, batch: int = 1):
        """Zero the recurrent state at an episode boundary."""
        self.state = self.cell.initial_state(batch)

    def _check(self, x, x_next):
        if x.shape[-1] != self.state_dim or x_next.shape[-1] != self.state_dim:
            raise ValueError(f"states must have width {self.state_dim}")

    def predict(self, x, x_next):
        """One step of closed-loop inference; advances the recurrent state."""
        x = np.asarray(x, dtype=float)
        x_next = np.asarray(x_next, dtype=float)
        self._check(x, x_next)
        single = x.ndim == 1
        feats = self.encoder(np.concatenate([np.atleast_2d(x), np.atleast_2d(x_next)], axis=-1))
        self.state, _ = self.cell.step(feats, self.state)
        a_hat = self.head(self.state[0])
        return a_hat[0] if single else a_hat

    def predict_sequence(self, xs, xns):
        """Predictions for (T, B, dim) sequences starting from a zero state."""
        self._check(xs, xns)
        feats = self.encoder(np.concatenate([xs, xns], axis=-1))
        hs, _ = self.cell.forward(feats)
        return self.head(hs)

    def loss_and_grads(self, xs, xns, acts, weights):
        """Weighted sum of per-step losses over (T, B) sequences and its gradients.

        ``weights`` (T, B) says how much each step counts; padded steps get zero.
        """
        self._check(xs, xns)
        feats, enc_cache = self.encoder.forward(np.concatenate([xs, xns], axis=-1))
        hs, cell_cache = self.cell.forward(feats)
        a_hat, head_cache = self.head.forward(hs)
        err = a_hat - acts
        loss = float(np.sum(weights * self.beta * np.sum(err**2, axis=-1)))
        d_ahat = 2.0 * self.beta * weights[..., None] * err
        g_head, dhs = self.head.backward(head_cache, d_ahat)
        g_cell, dfeats = self.cell.backward(cell_cache, dhs)
        g_enc, _ = self.encoder.backward(enc_cache, dfeats)
        grads = {**nn.prefixed("enc", g_enc), **nn.prefixed("lstm", g_cell), **nn.prefixed("head", g_head)}
        return loss, grads

    def tracker(self):
        """Fresh inference handle sharing parameters but not recurrent state."""
        return _Tracker(self)

    def clone(self) -> InverseModel:
        # deepcopy keeps the aliasing between self.params and the submodules
        return copy.deepcopy(self)

    def save(self, path):
        nn.save_params(path, self.params)

    def load(self, path):
        loaded = nn.load_params(path)
        if loaded.keys() != self.params.keys():
            raise ValueError("checkpoint does not match model layout")
        for k, v in loaded.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {self.params[k].shape}")
            self.params[k][...] = v


class _Tracker:
    def __init__(self, model: InverseModel):
        self.model = model
        self.state = None

    def begin(self, batch: int):
        self.state = self.model.cell.initial_state(batch)

    def predict(self, x, x_next):
        m = self.model
        feats = m.encoder(np.concatenate([x, x_next], axis=-1))
        self.state, _ = m.cell.step(feats, self.state)
        return m.head(self.state[0])


def episode_windows(buffer: SampleBuffer, index: np.ndarray):
    """Group buffer rows by episode and build zero-padded prefix windows.

    Returns ``(xs, xns, acts, weights, pos)`` where the first four are (T, E, ...)
    arrays covering each touched episode from its first step up to its last
    requested row, and ``pos`` maps every requested row to its (t, e) slot.
    """
    index = np.asarray(index)
    starts = buffer.start[index]
    uniq, inv = np.unique(starts, return_inverse=True)
    offs = index - starts
    lengths = np.zeros(len(uniq), dtype=np.int64)
    np.maximum.at(lengths, inv, offs + 1)
    T = int(lengths.max()) if len(uniq) else 0
    E = len(uniq)
    rows = uniq[None, :] + np.arange(T)[:, None]
    valid = np.arange(T)[:, None] < lengths[None, :]
    rows = np.where(valid, rows, 0)
    xs = np.where(valid[..., None], buffer.x[rows], 0.0)
    xns = np.where(valid[..., None], buffer.x_next[rows], 0.0)
    acts = np.where(valid[..., None], buffer.a[rows], 0.0)
    weights = np.zeros((T, E))
    np.add.at(weights, (offs, inv), 1.0)
    return xs, xns, acts, weights, (offs, inv)


def train_inverse(model: InverseModel, buffer: SampleBuffer, n_batches: int, batch_size: int,
                  adam: nn.Adam, rng: np.random.Generator, max_grad_norm: float | None = 5.0,
                  history: list | None = None) -> float:
    """Run ``n_batches`` Adam steps on uniformly drawn transitions; returns the mean batch loss.

    Each draw is evaluated after replaying its episode from the start so the
    recurrent state matches inference. The loss of a batch is the mean per-sample
    action loss before that batch's update.
    """
    if len(buffer) == 0:
        raise ValueError("cannot train on an empty buffer")
    losses = []
    for _ in range(n_batches):
        idx = rng.integers(0, len(buffer), size=batch_size)
        xs, xns, acts, weights, _ = episode_windows(buffer, idx)
        loss, grads = model.loss_and_grads(xs, xns, acts, weights / batch_size)
        nn.clip_grad_norm(grads, max_grad_norm)
        adam.step(grads)
        losses.append(loss)
    if history is not None:
        history.extend(losses)
    return float(np.mean(losses)) if losses else 0.0


def replay_losses(model: InverseModel, buffer: SampleBuffer, index: np.ndarray) -> np.ndarray:
    """Per-row action loss of ``model`` at the given buffer rows, with episode-prefix replay."""
    if len(index) == 0:
        return np.zeros(0)
    xs, xns, acts, _, (offs, inv) = episode_windows(buffer, index)
    a_hat = model.predict_sequence(xs, xns)
    return action_loss(acts[offs, inv], a_hat[offs, inv], model.beta)
