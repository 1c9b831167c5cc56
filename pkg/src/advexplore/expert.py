"""Scripted experts, demonstration sets and closed-loop tracking evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs
from .envs import ARM_LINKS, CHAIN_JOINTS, CHAIN_LINKS, CONTACT_RADIUS, PUSH_STEP

POINT_KP = 6.0
POINT_KD = 4.0
REACH_GAIN = 10.0
REACH_DAMPING = 0.01
PUSH_TOL = 0.01
PUSH_CLEARANCE = 0.03


def _point_action(x):
    p, v, g = x[0:2], x[2:4], x[4:6]
    return POINT_KP * (g - p) - POINT_KD * v


def _jacobian_action(angles, links, target, gain=REACH_GAIN, damping=REACH_DAMPING):
    """Damped least-squares joint step, rescaled so the largest joint command is <= 1."""
    tip = envs.planar_fk(angles, links)
    jac = envs.planar_jacobian(angles, links)
    w = np.linalg.solve(jac @ jac.T + damping * np.eye(2), target - tip)
    a = gain * jac.T @ w
    peak = np.abs(a).max()
    return a / peak if peak > 1.0 else a


def _toward(p, target, step=PUSH_STEP):
    """Action moving ``p`` to ``target``, saturating at one full step."""
    d = target - p
    n = np.linalg.norm(d)
    if n < 1e-12:
        return np.zeros(2)
    return d / n * min(n / step, 1.0)


def _push_action(x):
    """Push the block along x until aligned with the goal, then along y."""
    p, b, g = x[0:2], x[2:4], x[4:6]
    d = g - b
    if np.all(np.abs(d) < PUSH_TOL):
        return np.zeros(2)
    k = 0 if abs(d[0]) >= PUSH_TOL else 1
    o = 1 - k
    s = np.sign(d[k])
    rel = p - b
    clear = CONTACT_RADIUS + PUSH_CLEARANCE
    a = np.zeros(2)
    if -s * rel[k] >= CONTACT_RADIUS - 1e-6 and abs(rel[o]) < CONTACT_RADIUS - 0.03:
        # on the push face: advance by exactly the distance still to cover
        gap = -s * rel[k] - CONTACT_RADIUS
        a[k] = s * min(gap + abs(d[k]) / envs.PUSH_BLOCK_SHARE, PUSH_STEP) / PUSH_STEP
        a[o] = np.clip(-rel[o] / PUSH_STEP, -1.0, 1.0)
        return a
    if -s * rel[k] >= clear - 1e-9:
        target = b.copy()
        target[k] -= s * clear
    elif abs(rel[o]) >= clear - 1e-9:
        target = p.copy()
        target[k] = b[k] - s * clear
    else:
        side = 1.0 if rel[o] >= 0 else -1.0
        target = p.copy()
        target[o] = b[o] + side * clear
    return _toward(p, target)


def expert_action(env_id: str, state) -> np.ndarray:
    """Scripted controller; output always inside the action box."""
    x = state.vector if isinstance(state, envs.EnvState) else np.asarray(state, dtype=float)
    if env_id == "point_reach":
        a = _point_action(x)
    elif env_id == "arm_reach":
        a = _jacobian_action(x[0:2], ARM_LINKS, x[2:4])
    elif env_id == "chain_reach":
        a = _jacobian_action(x[:CHAIN_JOINTS], CHAIN_LINKS, x[-2:])
    elif env_id == "push_block":
        a = _push_action(x)
    else:
        raise ValueError(f"unknown env_id {env_id!r}")
    return np.clip(a, -1.0, 1.0)


# -- demonstrations -----------------------------------------------------------


@dataclass
class DemoEpisode:
    env_id: str
    states: np.ndarray  # (T + 1, state_dim), states[0] is the initial state
    actions: np.ndarray  # (T, action_dim)
    success: bool = True


@dataclass
class DemoSet:
    env_id: str
    episodes: list[DemoEpisode]
    rejected: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.episodes)

    def transitions(self, idx=None):
        """Stack episodes (all, or the given indices) into contiguous arrays."""
        eps = self.episodes if idx is None else [self.episodes[i] for i in idx]
        x = np.concatenate([e.states[:-1] for e in eps])
        xn = np.concatenate([e.states[1:] for e in eps])
        a = np.concatenate([e.actions for e in eps])
        return x, a, xn


def rollout_expert(env_id: str, rng: np.random.Generator) -> DemoEpisode:
    spec = envs.env_spec(env_id)
    s = envs.reset(env_id, rng)
    states, actions = [s.vector], []
    for _ in range(spec.horizon):
        a = expert_action(env_id, s)
        s = envs.step(env_id, s, a)
        states.append(s.vector)
        actions.append(a)
    states = np.array(states)
    ok = envs.goal_distance(env_id, states[-1]) < spec.success_eps
    return DemoEpisode(env_id, states, np.array(actions), bool(ok))


def generate_demos(env_id: str, n_episodes: int, rng: np.random.Generator,
                   filter_trivial: bool | None = None) -> DemoSet:
    """Roll out the expert until ``n_episodes`` successful, non-trivial episodes are kept.

    ``chain_reach`` skips the triviality filter by default, like the hand task it stands
    in for.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    spec = envs.env_spec(env_id)
    if filter_trivial is None:
        filter_trivial = env_id != "chain_reach"
    kept, tried = [], 0
    while len(kept) < n_episodes:
        ep = rollout_expert(env_id, rng)
        tried += 1
        nontrivial = envs.goal_distance(env_id, ep.states[0]) >= spec.nontrivial_eps
        if ep.success and (nontrivial or not filter_trivial):
            kept.append(ep)
        if tried >= 100 and len(kept) < 0.01 * tried:
            raise RuntimeError(f"expert acceptance rate below 1% on {env_id}")
    return DemoSet(env_id, kept, rejected=tried - len(kept))


def save_demos(demos: DemoSet, path) -> None:
    """Line-delimited JSON: one header line per episode followed by one row per step.

    Header: ``{"episode": i, "env_id": ..., "steps": T, "success": true}``.
    Rows: ``{"t": t, "state": [...], "action": [...] | null}``; the row with t = T
    carries the final state and a null action. Floats are written with ``repr``
    precision so a load reproduces the arrays bit for bit.
    """
    with open(path, "w") as f:
        for i, ep in enumerate(demos.episodes):
            steps = len(ep.actions)
            f.write(json.dumps({"episode": i, "env_id": ep.env_id, "steps": steps,
                                "success": ep.success}) + "\n")
            for t in range(steps + 1):
                action = ep.actions[t].tolist() if t < steps else None
                f.write(json.dumps({"t": t, "state": ep.states[t].tolist(), "action": action}) + "\n")


def load_demos(path) -> DemoSet:
    episodes = []
    with open(path) as f:
        lines = iter(f)
        for line in lines:
            head = json.loads(line)
            rows = [json.loads(next(lines)) for _ in range(head["steps"] + 1)]
            states = np.array([r["state"] for r in rows])
            actions = np.array([r["action"] for r in rows[:-1]])
            episodes.append(DemoEpisode(head["env_id"], states, actions, head["success"]))
    if not episodes:
        raise ValueError(f"{path} holds no episodes")
    return DemoSet(episodes[0].env_id, episodes)


# -- evaluation ---------------------------------------------------------------


@dataclass
class EvalReport:
    samples_collected: int
    success_rate: float
    n_episodes: int


class ReplayController:
    """Drop-in for an inverse model that returns the demo's recorded actions."""

    def __init__(self, actions: np.ndarray):
        self.actions = actions  # (T, B, action_dim)
        self.t = 0

    def begin(self, batch: int):
        self.t = 0

    def predict(self, x, x_next):
        a = self.actions[self.t]
        self.t += 1
        return a


def evaluate(model, env_id: str, demos: DemoSet, n_eval: int | None = None,
             rng: np.random.Generator | None = None, samples_collected: int = 0,
             controller=None) -> EvalReport:
    """Closed-loop tracking of expert state sequences.

    Each episode starts from the demo's initial state; at every step the model
    infers the action from the actual state and the next demo state. Success means
    the final task position lands within ``success_eps`` of the demo's final one.
    ``model`` is only read: evaluation runs on a clone's recurrent state.
    """
    if len(demos) == 0:
        raise ValueError("empty demo set")
    spec = envs.env_spec(env_id)
    if n_eval is None:
        idx = np.arange(len(demos))
    elif not 1 <= n_eval <= len(demos):
        raise ValueError(f"n_eval must be in [1, {len(demos)}], got {n_eval}")
    elif rng is None:
        idx = np.arange(n_eval)
    else:
        idx = np.sort(rng.choice(len(demos), n_eval, replace=False))
    target = np.stack([demos.episodes[i].states for i in idx], axis=1)  # (T+1, B, dim)
    runner = controller
    if runner is None:
        runner = model.tracker()
    runner.begin(len(idx))
    x = target[0].copy()
    for t in range(target.shape[0] - 1):
        a = runner.predict(x, target[t + 1])
        x = envs.dynamics(env_id, x, a)
    err = np.linalg.norm(envs.effector(env_id, x) - envs.effector(env_id, target[-1]), axis=-1)
    success = float(np.mean(err < spec.success_eps))
    return EvalReport(samples_collected, success, len(idx))


def replay_actions(demos: DemoSet, idx=None) -> ReplayController:
    eps = demos.episodes if idx is None else [demos.episodes[i] for i in idx]
    return ReplayController(np.stack([e.actions for e in eps], axis=1))
