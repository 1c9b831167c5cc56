"""PPO with a diagonal Gaussian policy, clipped surrogate and GAE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn

LOG_2PI = np.log(2.0 * np.pi)
LOGSTD_MIN, LOGSTD_MAX = -5.0, 2.0


@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 10
    minibatch: int = 50
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    lr: float = 1e-3
    max_grad_norm: float | None = 5.0
    hidden: tuple = (64, 64)
    init_logstd: float = 0.0
    policy_out_scale: float = 0.01  # shrink the initial policy head so early means sit near zero
    reward_norm: bool = True  # divide rewards by a running std of discounted returns


def gaussian_logp(a, mu, logstd):
    z = (a - mu) * np.exp(-logstd)
    return -0.5 * np.sum(z**2, axis=-1) - np.sum(logstd) - 0.5 * mu.shape[-1] * LOG_2PI


def gaussian_entropy(logstd):
    return float(np.sum(logstd + 0.5 * (LOG_2PI + 1.0)))


class PolicyAgent:
    def __init__(self, state_dim: int, action_dim: int, rng: np.random.Generator,
                 config: PPOConfig | None = None):
        self.config = config or PPOConfig()
        h = list(self.config.hidden)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.policy = nn.MLP([state_dim, *h, action_dim], rng)
        self.value = nn.MLP([state_dim, *h, 1], rng)
        last = self.policy.n_layers - 1
        self.policy.params[f"W{last}"] *= self.config.policy_out_scale
        self.policy.params[f"b{last}"] *= self.config.policy_out_scale
        self.logstd = np.full(action_dim, float(self.config.init_logstd))
        self.pi_params = {**nn.prefixed("pi", self.policy.params), "logstd": self.logstd}
        self.adam_pi = nn.Adam(self.pi_params, lr=self.config.lr)
        self.adam_v = nn.Adam(self.value.params, lr=self.config.lr)
        self.return_stats = RunningMoments()

    def mean_action(self, x):
        return self.policy(np.asarray(x, dtype=float))

    def state_value(self, x):
        return self.value(np.asarray(x, dtype=float))[..., 0]

    def act(self, x, rng: np.random.Generator):
        """Sample an (unclipped) action; returns (a, log-density of a, value)."""
        x = np.asarray(x, dtype=float)
        mu = self.policy(x)
        if not np.all(np.isfinite(mu)):
            raise FloatingPointError("non-finite policy output")
        a = mu + np.exp(self.logstd) * rng.standard_normal(mu.shape)
        return a, float(gaussian_logp(a, mu, self.logstd)), float(self.state_value(x))

    def log_prob(self, x, a):
        return gaussian_logp(np.asarray(a, dtype=float), self.mean_action(x), self.logstd)

    def all_params(self) -> nn.Params:
        return {**self.pi_params, **nn.prefixed("v", self.value.params)}

    def save(self, path):
        nn.save_params(path, self.all_params())

    def load(self, path):
        mine = self.all_params()
        loaded = nn.load_params(path)
        if loaded.keys() != mine.keys():
            raise ValueError("checkpoint does not match agent layout")
        for k, v in loaded.items():
            mine[k][...] = v


class RunningMoments:
    """Streaming mean and variance (parallel-merge form)."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.var = 1.0

    def update(self, values):
        values = np.asarray(values, dtype=float)
        n = len(values)
        if n == 0:
            return
        m, v = float(values.mean()), float(values.var())
        if self.count == 0:
            self.count, self.mean, self.var = n, m, v
            return
        total = self.count + n
        delta = m - self.mean
        self.var = (self.count * self.var + n * v + delta**2 * self.count * n / total) / total
        self.mean += delta * n / total
        self.count = total

    @property
    def std(self):
        return float(np.sqrt(self.var))


def discounted_returns(rewards, terminals, gamma):
    """Forward running discounted sums, restarted after each terminal."""
    out = np.empty(len(rewards))
    acc = 0.0
    for t, (r, done) in enumerate(zip(rewards, terminals)):
        acc = acc * gamma + r
        out[t] = acc
        if done:
            acc = 0.0
    return out


@dataclass
class RolloutBuffer:
    """On-policy storage Z_P; rewards are filled in right before an update."""

    x: list = field(default_factory=list)
    a: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    value: list = field(default_factory=list)
    terminal: list = field(default_factory=list)
    x_next: list = field(default_factory=list)
    source: list = field(default_factory=list)  # row index in the model buffer
    rewards: np.ndarray | None = None

    def __len__(self):
        return len(self.x)

    def add(self, x, a, logp, value, terminal, x_next, source=-1):
        self.x.append(x)
        self.a.append(a)
        self.logp.append(logp)
        self.value.append(value)
        self.terminal.append(terminal)
        self.x_next.append(x_next)
        self.source.append(source)

    def clear(self):
        for name in ("x", "a", "logp", "value", "terminal", "x_next", "source"):
            getattr(self, name).clear()
        self.rewards = None


def compute_gae(rewards, values, terminals, gamma=0.99, lam=0.95):
    """Generalized advantage estimates.

    ``values`` has one more entry than ``rewards``: the bootstrap value of the
    state following the last transition.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    terminals = np.asarray(terminals, dtype=float)
    n = len(rewards)
    if len(values) != n + 1 or len(terminals) != n:
        raise ValueError("need len(values) == len(rewards) + 1 == len(terminals) + 1")
    adv = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        live = 1.0 - terminals[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
    return adv, adv + values[:-1]


def normalize(adv):
    std = adv.std()
    return (adv - adv.mean()) / (std if std > 1e-8 else 1.0)


def ppo_loss(agent: PolicyAgent, mb: dict, clip=0.2, vf_coef=0.5, ent_coef=0.0):
    """Clipped-surrogate loss on a minibatch and its gradients.

    ``mb`` holds arrays ``x, a, logp_old, adv, ret``. Returns
    ``(loss, policy_grads, value_grads, info)``.
    """
    x, a, adv = mb["x"], mb["a"], mb["adv"]
    n = len(x)
    mu, pi_cache = agent.policy.forward(x)
    logstd = agent.logstd
    logp = gaussian_logp(a, mu, logstd)
    ratio = np.exp(logp - mb["logp_old"])
    if not np.all(np.isfinite(ratio)):
        raise FloatingPointError("non-finite probability ratio")
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    surrogate = np.minimum(unclipped, clipped)
    v, v_cache = agent.value.forward(x)
    v = v[:, 0]
    entropy = gaussian_entropy(logstd)
    loss = -surrogate.mean() + vf_coef * np.mean((v - mb["ret"]) ** 2) - ent_coef * entropy

    # gradient flows through the ratio only where the unclipped branch is the min
    active = unclipped <= clipped
    dlogp = np.where(active, -unclipped, 0.0) / n
    inv_var = np.exp(-2.0 * logstd)
    diff = a - mu
    dmu = dlogp[:, None] * diff * inv_var
    dlogstd = np.sum(dlogp[:, None] * (diff**2 * inv_var - 1.0), axis=0) - ent_coef
    g_pi, _ = agent.policy.backward(pi_cache, dmu)
    g_pi = {**nn.prefixed("pi", g_pi), "logstd": dlogstd}
    dv = (2.0 * vf_coef / n) * (v - mb["ret"])
    g_v, _ = agent.value.backward(v_cache, dv[:, None])
    info = {
        "surrogate": float(surrogate.mean()),
        "value_loss": float(np.mean((v - mb["ret"]) ** 2)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip)),
        "approx_kl": float(np.mean(mb["logp_old"] - logp)),
    }
    return float(loss), g_pi, g_v, info


def ppo_update(agent: PolicyAgent, buffer: RolloutBuffer, rng: np.random.Generator,
               expected_size: int | None = None) -> dict:
    """K epochs of minibatch Adam on the clipped loss, then empty the buffer."""
    cfg = agent.config
    n = len(buffer)
    if expected_size is not None and n != expected_size:
        raise ValueError(f"rollout holds {n} transitions, expected {expected_size}")
    if buffer.rewards is None or len(buffer.rewards) != n:
        raise ValueError("rollout rewards must be set before an update")
    x = np.asarray(buffer.x)
    a = np.asarray(buffer.a)
    logp_old = np.asarray(buffer.logp)
    bootstrap = float(agent.state_value(buffer.x_next[-1]))
    values = np.append(np.asarray(buffer.value), bootstrap)
    rewards = np.asarray(buffer.rewards, dtype=float)
    if cfg.reward_norm:
        agent.return_stats.update(discounted_returns(rewards, buffer.terminal, cfg.gamma))
        rewards = rewards / max(agent.return_stats.std, 1e-8)
    adv, ret = compute_gae(rewards, values, buffer.terminal, cfg.gamma, cfg.lam)
    adv = normalize(adv)
    infos = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch):
            idx = perm[lo:lo + cfg.minibatch]
            mb = {"x": x[idx], "a": a[idx], "logp_old": logp_old[idx], "adv": adv[idx], "ret": ret[idx]}
            loss, g_pi, g_v, info = ppo_loss(agent, mb, cfg.clip, cfg.vf_coef, cfg.ent_coef)
            nn.clip_grad_norm(g_pi, cfg.max_grad_norm)
            nn.clip_grad_norm(g_v, cfg.max_grad_norm)
            agent.adam_pi.step(g_pi)
            agent.adam_v.step(g_v)
            np.clip(agent.logstd, LOGSTD_MIN, LOGSTD_MAX, out=agent.logstd)
            info["loss"] = loss
            infos.append(info)
    stats = {k: float(np.mean([i[k] for i in infos])) for k in infos[0]}
    stats["mean_reward"] = float(np.mean(buffer.rewards))
    stats["n_minibatches"] = len(infos) // cfg.epochs
    buffer.clear()
    return stats
