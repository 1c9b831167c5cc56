"""Trial orchestration, seeding, loss-density estimates and CSV/JSON output."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs, nn
from .collectors import PPO_KINDS, CollectorConfig, make_collector, warmup
from .expert import evaluate, generate_demos
from .inverse import InverseModel, SampleBuffer, train_inverse
from .ppo import PPOConfig

CURVE_COLUMNS = ("samples", "success_mean", "success_ci_low", "success_ci_high")
PDF_COLUMNS = ("collector", "loss", "density")
LOSS_HISTORY_BATCHES = 2000
CHAIN_WARMUP = 30_000

# child indices of the trial SeedSequence; fixed so that streams stay aligned
# across collectors that share a seed
STREAMS = ("env", "inverse_init", "train", "agent", "eval_demos", "train_demos", "warmup")


@dataclass
class TrialConfig:
    env_id: str = "push_block"
    collector: str = "adversarial"
    seed: int = 0
    delta: float = 1.5
    stabilize: bool = True
    beta: float = 1.0
    warmup_samples: int | None = None
    n_iter: int = 200
    n_episode: int = 10
    horizon: int = 50
    update_period: int = 2050
    lr: float = 1e-3
    inverse_batch_size: int = 64
    inverse_batches: int = 25
    forward_batches: int = 500
    ppo_minibatch: int = 50
    ppo_epochs: int = 10
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    hidden: int = 256
    recurrent: int = 256
    eval_every: int = 10_000
    n_eval: int = 500
    n_demos: int = 1000
    demo_episodes: int = 200
    noise_sigma: float = 0.1
    noise_target: float = 0.2
    max_grad_norm: float | None = 5.0
    preset: str = "paper"

    def __post_init__(self):
        envs.env_spec(self.env_id)
        CollectorConfig(kind=self.collector, delta=self.delta)
        positive = ("n_iter", "n_episode", "horizon", "update_period", "inverse_batch_size",
                    "inverse_batches", "ppo_minibatch", "ppo_epochs", "hidden", "recurrent",
                    "eval_every", "n_eval", "n_demos", "demo_episodes")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.update_period < self.ppo_minibatch:
            raise ValueError("update_period must be >= the PPO minibatch size")
        if self.horizon != envs.env_spec(self.env_id).horizon:
            raise ValueError("horizon must match the environment")

    @property
    def warmup(self) -> int:
        if self.collector == "demo":
            return 0  # Demo never touches the environment
        if self.warmup_samples is not None:
            return self.warmup_samples
        if self.env_id == "chain_reach" and self.collector in PPO_KINDS:
            return CHAIN_WARMUP
        return 0

    def collector_config(self) -> CollectorConfig:
        return CollectorConfig(
            kind=self.collector, n_episode=self.n_episode, update_period=self.update_period,
            delta=self.delta, stabilize=self.stabilize, inverse_batches=self.inverse_batches,
            inverse_batch_size=self.inverse_batch_size, forward_batches=self.forward_batches,
            noise_sigma=self.noise_sigma, noise_target=self.noise_target,
            demo_episodes=self.demo_episodes, max_grad_norm=self.max_grad_norm)

    def ppo_config(self) -> PPOConfig:
        return PPOConfig(gamma=self.gamma, lam=self.lam, clip=self.clip, epochs=self.ppo_epochs,
                         minibatch=self.ppo_minibatch, vf_coef=self.vf_coef, ent_coef=self.ent_coef,
                         lr=self.lr, max_grad_norm=self.max_grad_norm)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS = {
    "paper": {},
    # 30K samples per trial and a narrower inverse model so a five-seed,
    # five-collector comparison fits on one laptop core
    "desk": {"n_iter": 60, "eval_every": 2000, "n_eval": 100, "hidden": 64, "recurrent": 64},
}
PRESET_SEEDS = {"paper": 20, "desk": 5}


def make_config(preset: str = "paper", **overrides) -> TrialConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    values = {**PRESETS[preset], "preset": preset}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrialConfig(**values)


def trial_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent Philox streams derived from the trial seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.Philox(ss)) for name, ss in zip(STREAMS, children)}


@dataclass
class TrialLog:
    config: dict
    eval_samples: list = field(default_factory=list)
    eval_success: list = field(default_factory=list)
    iter_loss: list = field(default_factory=list)
    batch_losses: list = field(default_factory=list)
    warmup_losses: list = field(default_factory=list)
    ppo_stats: list = field(default_factory=list)
    env_samples: int = 0
    extra: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def final_success(self) -> float:
        return self.eval_success[-1] if self.eval_success else float("nan")

    def record_eval(self, samples: int, success: float):
        if self.eval_samples and samples <= self.eval_samples[-1]:
            raise ValueError("evaluation points must be strictly increasing in samples")
        self.eval_samples.append(int(samples))
        self.eval_success.append(float(success))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))

    @classmethod
    def from_json(cls, text: str) -> TrialLog:
        return cls(**json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> TrialLog:
        return cls.from_json(Path(path).read_text())


def run_trial(config: TrialConfig, progress=None) -> TrialLog:
    """Warm-up, then collect/train for ``n_iter`` iterations, evaluating on a fixed cadence.

    For ``demo`` the x-axis of the learning curve is the sample budget the other
    collectors would have used by that iteration; ``env_samples`` stays zero.
    """
    t0 = time.perf_counter()
    spec = envs.env_spec(config.env_id)
    rngs = trial_streams(config.seed)
    env = envs.Env(config.env_id, rngs["env"])
    model = InverseModel(spec.state_dim, spec.action_dim, rngs["inverse_init"],
                         hidden=config.hidden, recurrent=config.recurrent, beta=config.beta)
    adam = nn.Adam(model.params, lr=config.lr)
    z_i = SampleBuffer(spec.state_dim, spec.action_dim)
    eval_demos = generate_demos(config.env_id, config.n_eval, rngs["eval_demos"])
    train_demos = None
    if config.collector == "demo":
        train_demos = generate_demos(config.env_id, config.n_demos, rngs["train_demos"])
    collector = make_collector(config.collector_config(), env, model, adam, z_i, rngs["train"],
                               agent_rng=rngs["agent"], ppo_config=config.ppo_config(), demos=train_demos)
    log = TrialLog(config.to_dict())

    per_iter = config.n_episode * config.horizon
    if config.warmup:
        warmup(env, z_i, config.warmup, rngs["warmup"])
        n_batches = math.ceil(config.warmup / per_iter) * config.inverse_batches
        train_inverse(model, z_i, n_batches, config.inverse_batch_size, adam, rngs["train"],
                      config.max_grad_norm, history=log.warmup_losses)

    def samples_so_far(i):
        return i * per_iter + config.warmup if config.collector == "demo" else len(z_i)

    try:
        log.record_eval(samples_so_far(0), evaluate(model, config.env_id, eval_demos).success_rate)
        next_eval = samples_so_far(0) + config.eval_every
        for i in range(1, config.n_iter + 1):
            n_before = len(collector.batch_losses)
            collector.run_iteration()
            log.iter_loss.append(float(np.mean(collector.batch_losses[n_before:])))
            samples = samples_so_far(i)
            if samples >= next_eval or i == config.n_iter:
                log.record_eval(samples, evaluate(model, config.env_id, eval_demos).success_rate)
                while next_eval <= samples:
                    next_eval += config.eval_every
            if progress is not None:
                progress(i, log)
    except Exception as exc:
        # keep what was logged so far; callers can still write it out
        log.extra["error"] = repr(exc)
        _finish(log, collector, z_i, t0)
        exc.partial_log = log
        raise
    return _finish(log, collector, z_i, t0)


def _finish(log: TrialLog, collector, z_i, t0) -> TrialLog:
    log.env_samples = len(z_i)
    log.batch_losses = [float(v) for v in collector.batch_losses[:LOSS_HISTORY_BATCHES]]
    log.ppo_stats = list(getattr(collector, "ppo_stats", []))
    if hasattr(collector, "sigma_history"):
        log.extra["sigma"] = list(collector.sigma_history)
    if hasattr(collector, "forward_losses"):
        log.extra["forward_loss"] = list(collector.forward_losses)
    log.wall_clock = time.perf_counter() - t0
    return log


# -- analysis -----------------------------------------------------------------


def silverman_bandwidth(values) -> float:
    values = np.asarray(values, dtype=float)
    return 1.06 * values.std(ddof=1) * len(values) ** (-0.2)


def kde(values, grid, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density of ``values`` evaluated on ``grid``.

    The bandwidth defaults to 1.06 * std * n^(-1/5), which needs at least two
    values; an explicit bandwidth works with a single point.
    """
    values = np.asarray(values, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    if bandwidth is None:
        if len(values) < 2:
            raise ValueError("need at least two values to pick a bandwidth")
        bandwidth = silverman_bandwidth(values)
    if len(values) == 0:
        raise ValueError("no values")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    z = (grid[..., None] - values) / bandwidth
    return np.exp(-0.5 * z**2).sum(axis=-1) / (len(values) * bandwidth * np.sqrt(2 * np.pi))


def aggregate_curve(logs: list[TrialLog]) -> list[tuple]:
    """Mean success and a normal-approximation 95% interval per evaluation point.

    With a single seed the interval collapses onto the mean.
    """
    if not logs:
        return []
    samples = logs[0].eval_samples
    for log in logs[1:]:
        if log.eval_samples != samples:
            raise ValueError("trials evaluated at different sample counts")
    rows = []
    for j, s in enumerate(samples):
        vals = np.array([log.eval_success[j] for log in logs])
        mean = float(vals.mean())
        half = 1.96 * vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
        rows.append((s, mean, mean - half, mean + half))
    return rows


def loss_pdf(logs_by_collector: dict[str, list[TrialLog]], n_grid: int = 200) -> list[tuple]:
    pooled = {name: np.concatenate([np.asarray(log.batch_losses, dtype=float) for log in logs])
              for name, logs in logs_by_collector.items()}
    pooled = {k: v for k, v in pooled.items() if len(v) >= 2}
    if not pooled:
        return []
    hi = max(float(v.max()) for v in pooled.values())
    grid = np.linspace(0.0, hi * 1.1 if hi > 0 else 1.0, n_grid)
    rows = []
    for name, vals in pooled.items():
        dens = kde(vals, grid)
        rows.extend((name, float(g), float(d)) for g, d in zip(grid, dens))
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def write_loss_pdf(path, logs_by_collector: dict[str, list[TrialLog]]) -> Path:
    _write_csv(path, PDF_COLUMNS, loss_pdf(logs_by_collector))
    return Path(path)


def emit(logs: list[TrialLog], out_dir, pdf_logs: dict[str, list[TrialLog]] | None = None) -> list[Path]:
    """Write curve.csv, loss_pdf.csv and config.json for one configuration's seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "curve.csv", CURVE_COLUMNS, aggregate_curve(logs))
    if pdf_logs is None:
        pdf_logs = {logs[0].config["collector"]: logs} if logs else {}
    write_loss_pdf(out / "loss_pdf.csv", pdf_logs)
    cfg = dict(logs[0].config) if logs else {}
    cfg["seeds"] = [log.config["seed"] for log in logs]
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return [out / "curve.csv", out / "loss_pdf.csv", out / "config.json"]


def run_sweep(base: TrialConfig, collectors, seeds, out_dir=None, progress=None) -> dict[str, list[TrialLog]]:
    """Run every (collector, seed) trial; optionally persist logs and emitted files."""
    results: dict[str, list[TrialLog]] = {}
    for name in collectors:
        logs = []
        for seed in seeds:
            cfg = dataclasses.replace(base, collector=name, seed=seed)
            log = run_trial(cfg)
            logs.append(log)
            if out_dir is not None:
                d = Path(out_dir) / name
                d.mkdir(parents=True, exist_ok=True)
                log.save(d / f"trial_seed{seed}.json")
            if progress is not None:
                progress(name, seed, log)
        results[name] = logs
        if out_dir is not None:
            emit(logs, Path(out_dir) / name)
    return results
