"""Data-collection strategies that feed the inverse model's buffer Z_I.

``adversarial``
    PPO agent rewarded by the inverse model's loss on its own transitions,
    optionally reshaped to ``-|L - delta|``.
``random``
    Uniform actions on the action box.
``curiosity``
    PPO agent rewarded by a forward model's feature-prediction error.
``noise``
    Greedy PPO policy with adaptive Gaussian parameter noise.
``demo``
    No environment interaction; trains on sampled expert episodes.

All environment-driven collectors add ``n_episode * horizon`` transitions to
Z_I per iteration and train the inverse model once at the end of it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envs, nn
from .expert import DemoSet
from .inverse import InverseModel, SampleBuffer, action_loss, episode_windows, train_inverse
from .ppo import PolicyAgent, PPOConfig, RolloutBuffer, ppo_update

KINDS = ("adversarial", "random", "curiosity", "noise", "demo")
PPO_KINDS = ("adversarial", "curiosity", "noise")


@dataclass
class CollectorConfig:
    kind: str = "adversarial"
    n_episode: int = 10
    update_period: int = 2050
    delta: float = 1.5
    stabilize: bool = True
    inverse_batches: int = 25
    inverse_batch_size: int = 64
    forward_batches: int = 500
    forward_batch_size: int = 64
    feature_dim: int = 64
    noise_sigma: float = 0.1
    noise_target: float = 0.2
    noise_factor: float = 1.01
    demo_episodes: int = 200
    max_grad_norm: float | None = 5.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown collector {self.kind!r}; expected one of {KINDS}")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")


def shape_reward(loss, delta: float):
    """Stabilized reward -|L - delta|: zero at L = delta, negative elsewhere."""
    return -np.abs(np.asarray(loss, dtype=float) - delta) if np.ndim(loss) else -abs(float(loss) - delta)


def raw_reward(model: InverseModel, x, a, x_next) -> float:
    """Inverse-model loss on one transition; advances the model's recurrent state."""
    return action_loss(np.clip(a, -1.0, 1.0), model.predict(x, x_next), model.beta)


def inverse_rewards(model: InverseModel, z_i: SampleBuffer, rows) -> np.ndarray:
    """Raw losses of the current model on Z_I rows, replaying each episode from its start."""
    rows = np.asarray(rows)
    xs, xns, acts, _, (offs, inv) = episode_windows(z_i, rows)
    a_hat = model.predict_sequence(xs, xns)
    return action_loss(acts[offs, inv], a_hat[offs, inv], model.beta)


def warmup(env: envs.Env, z_i: SampleBuffer, n: int, rng: np.random.Generator) -> int:
    """Append ``n`` uniformly random transitions to Z_I, episode by episode."""
    if n < 0:
        raise ValueError("warm-up size must be >= 0")
    done, added = True, 0
    x = None
    while added < n:
        if done:
            x = env.reset()
            z_i.new_episode()
        a = rng.uniform(-1.0, 1.0, size=env.spec.action_dim)
        x_next, done = env.step(a)
        z_i.append(x, a, x_next, done)
        x = x_next
        added += 1
    z_i.new_episode()
    return added


class ForwardModel:
    """Feature encoder phi and forward net f predicting phi(x') from (phi(x), a)."""

    def __init__(self, state_dim, action_dim, rng, feature_dim=64, lr=1e-3):
        self.phi = nn.MLP([state_dim, feature_dim, feature_dim], rng, out_tanh=True)
        self.f = nn.MLP([feature_dim + action_dim, feature_dim, feature_dim], rng)
        self.params = {**nn.prefixed("phi", self.phi.params), **nn.prefixed("f", self.f.params)}
        self.adam = nn.Adam(self.params, lr=lr)

    def losses(self, x, a, x_next):
        """Per-sample 0.5 * ||f(phi(x), a) - phi(x')||^2."""
        pred = self.f(np.concatenate([self.phi(x), a], axis=-1))
        return 0.5 * np.sum((pred - self.phi(x_next)) ** 2, axis=-1)

    def loss_and_grads(self, x, a, x_next):
        feat, phi_cache = self.phi.forward(x)
        pred, f_cache = self.f.forward(np.concatenate([feat, a], axis=-1))
        # the target phi(x') is held fixed
        err = pred - self.phi(x_next)
        n = len(x)
        loss = 0.5 * float(np.sum(err**2)) / n
        g_f, d_in = self.f.backward(f_cache, err / n)
        g_phi, _ = self.phi.backward(phi_cache, d_in[:, :feat.shape[-1]])
        return loss, {**nn.prefixed("phi", g_phi), **nn.prefixed("f", g_f)}

    def train(self, z_i: SampleBuffer, n_batches, batch_size, rng, max_grad_norm=5.0):
        losses = []
        for _ in range(n_batches):
            idx = rng.integers(0, len(z_i), size=batch_size)
            loss, grads = self.loss_and_grads(z_i.x[idx], z_i.a[idx], z_i.x_next[idx])
            nn.clip_grad_norm(grads, max_grad_norm)
            self.adam.step(grads)
            losses.append(loss)
        return float(np.mean(losses)) if losses else 0.0


class Collector:
    """Shared state: environment, inverse model with its optimizer, and Z_I."""

    kind = "base"

    def __init__(self, env: envs.Env, model: InverseModel, adam: nn.Adam, z_i: SampleBuffer,
                 config: CollectorConfig, rng: np.random.Generator):
        self.env = env
        self.model = model
        self.adam = adam
        self.z_i = z_i
        self.config = config
        self.rng = rng
        self.batch_losses: list[float] = []
        self.ppo_stats: list[dict] = []

    @property
    def horizon(self):
        return self.env.spec.horizon

    def train_model(self) -> float:
        c = self.config
        return train_inverse(self.model, self.z_i, c.inverse_batches, c.inverse_batch_size,
                             self.adam, self.rng, c.max_grad_norm, history=self.batch_losses)

    def run_iteration(self) -> int:
        raise NotImplementedError


class RandomCollector(Collector):
    kind = "random"

    def run_iteration(self) -> int:
        before = len(self.z_i)
        for _ in range(self.config.n_episode):
            x = self.env.reset()
            self.z_i.new_episode()
            for _ in range(self.horizon):
                a = self.rng.uniform(-1.0, 1.0, size=self.env.spec.action_dim)
                x_next, done = self.env.step(a)
                self.z_i.append(x, a, x_next, done)
                x = x_next
        self.train_model()
        return len(self.z_i) - before


class AgentCollector(Collector):
    """Episode loop shared by the PPO-driven collectors.

    Every step is stored in Z_P (raw sampled action, for the likelihood ratio) and
    in Z_I (executed, clamped action). Each time the cumulative step counter
    reaches a multiple of the update period, rewards for everything in Z_P are
    computed from the current models and the agent is updated.
    """

    def __init__(self, env, model, adam, z_i, config, rng, agent: PolicyAgent):
        super().__init__(env, model, adam, z_i, config, rng)
        self.agent = agent
        self.z_p = RolloutBuffer()
        self.counter = 0

    def episode_policy(self):
        """Return the per-step action function for the next episode."""
        return lambda x: self.agent.act(x, self.rng)

    def end_episode(self):
        pass

    def rewards(self) -> np.ndarray:
        raise NotImplementedError

    def update_agent(self):
        self.z_p.rewards = self.rewards()
        stats = ppo_update(self.agent, self.z_p, self.rng, expected_size=self.config.update_period)
        stats["counter"] = self.counter
        self.ppo_stats.append(stats)

    def collect(self) -> int:
        before = len(self.z_i)
        for _ in range(self.config.n_episode):
            act = self.episode_policy()
            x = self.env.reset()
            self.z_i.new_episode()
            for _ in range(self.horizon):
                a, logp, v = act(x)
                x_next, done = self.env.step(a)
                self.z_p.add(x, a, logp, v, done, x_next, source=len(self.z_i))
                self.z_i.append(x, np.clip(a, -1.0, 1.0), x_next, done)
                self.counter += 1
                if self.counter % self.config.update_period == 0:
                    self.update_agent()
                x = x_next
            self.end_episode()
        return len(self.z_i) - before

    def run_iteration(self) -> int:
        n = self.collect()
        self.train_model()
        return n


class AdversarialCollector(AgentCollector):
    kind = "adversarial"

    def rewards(self):
        raw = inverse_rewards(self.model, self.z_i, np.asarray(self.z_p.source))
        if self.config.stabilize:
            return shape_reward(raw, self.config.delta)
        return raw


class CuriosityCollector(AgentCollector):
    kind = "curiosity"

    def __init__(self, env, model, adam, z_i, config, rng, agent, forward: ForwardModel):
        super().__init__(env, model, adam, z_i, config, rng, agent)
        self.forward = forward
        self.forward_losses: list[float] = []

    def rewards(self):
        rows = np.asarray(self.z_p.source)
        return self.forward.losses(self.z_i.x[rows], self.z_i.a[rows], self.z_i.x_next[rows])

    def run_iteration(self) -> int:
        n = self.collect()
        c = self.config
        self.forward_losses.append(
            self.forward.train(self.z_i, c.forward_batches, c.forward_batch_size, self.rng, c.max_grad_norm))
        self.train_model()
        return n


class NoiseCollector(AgentCollector):
    """Acts greedily with a perturbed copy of the policy, resampled every episode."""

    kind = "noise"

    def __init__(self, env, model, adam, z_i, config, rng, agent):
        super().__init__(env, model, adam, z_i, config, rng, agent)
        self.sigma = config.noise_sigma
        self.sigma_history: list[float] = []
        self._gaps: list[float] = []
        self.perturbed = None

    def perturb(self) -> nn.MLP:
        pol = self.agent.policy
        twin = nn.MLP.__new__(nn.MLP)
        twin.__dict__.update(pol.__dict__)
        twin.params = {k: v + self.sigma * self.rng.standard_normal(v.shape) for k, v in pol.params.items()}
        return twin

    def episode_policy(self):
        self.perturbed = self.perturb()
        self._gaps = []

        def act(x):
            a = self.perturbed(x)
            clean = self.agent.mean_action(x)
            self._gaps.append(float(np.mean((a - clean) ** 2)))
            logp = float(self.agent.log_prob(x, a))
            return a, logp, float(self.agent.state_value(x))

        return act

    def end_episode(self):
        self.sigma_history.append(self.adapt(float(np.sqrt(np.mean(self._gaps)))))

    def adapt(self, distance: float) -> float:
        c = self.config
        if distance > c.noise_target:
            self.sigma /= c.noise_factor
        else:
            self.sigma *= c.noise_factor
        return self.sigma

    def rewards(self):
        return inverse_rewards(self.model, self.z_i, np.asarray(self.z_p.source))


def demo_iteration(demos: DemoSet, model: InverseModel, adam: nn.Adam, rng: np.random.Generator,
                   n_episodes: int = 200, n_batches: int = 25, batch_size: int = 64,
                   max_grad_norm: float | None = 5.0, history: list | None = None) -> float:
    """Sample expert episodes without replacement and train the inverse model on them."""
    if len(demos) == 0:
        raise ValueError("empty demo set")
    idx = rng.choice(len(demos), size=min(n_episodes, len(demos)), replace=False)
    x, a, xn = demos.transitions(idx)
    T = len(demos.episodes[0].actions)
    term = np.zeros(len(x), dtype=bool)
    term[T - 1::T] = True
    buf = SampleBuffer(x.shape[1], a.shape[1], capacity=len(x))
    buf.extend_episodes(x, a, xn, term)
    return train_inverse(model, buf, n_batches, batch_size, adam, rng, max_grad_norm, history=history)


class DemoCollector(Collector):
    kind = "demo"

    def __init__(self, env, model, adam, z_i, config, rng, demos: DemoSet):
        super().__init__(env, model, adam, z_i, config, rng)
        self.demos = demos

    def run_iteration(self) -> int:
        c = self.config
        demo_iteration(self.demos, self.model, self.adam, self.rng, c.demo_episodes,
                       c.inverse_batches, c.inverse_batch_size, c.max_grad_norm, self.batch_losses)
        return 0


def make_collector(config: CollectorConfig, env: envs.Env, model: InverseModel, adam: nn.Adam,
                   z_i: SampleBuffer, rng: np.random.Generator, agent_rng: np.random.Generator | None = None,
                   ppo_config: PPOConfig | None = None, demos: DemoSet | None = None) -> Collector:
    kind = config.kind
    if kind == "random":
        return RandomCollector(env, model, adam, z_i, config, rng)
    if kind == "demo":
        if demos is None:
            raise ValueError("demo collector needs a demo set")
        return DemoCollector(env, model, adam, z_i, config, rng, demos)
    agent_rng = agent_rng if agent_rng is not None else rng
    spec = env.spec
    agent = PolicyAgent(spec.state_dim, spec.action_dim, agent_rng, ppo_config)
    if kind == "adversarial":
        return AdversarialCollector(env, model, adam, z_i, config, rng, agent)
    if kind == "noise":
        return NoiseCollector(env, model, adam, z_i, config, rng, agent)
    forward = ForwardModel(spec.state_dim, spec.action_dim, agent_rng, config.feature_dim,
                           lr=agent.config.lr)
    return CuriosityCollector(env, model, adam, z_i, config, rng, agent, forward)
