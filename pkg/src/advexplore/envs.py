"""Deterministic desk-scale control environments.

Four tasks, all with action box [-1, 1]^action_dim and a 50-step horizon:

``point_reach``
    Double-integrator point mass, state ``(px, py, vx, vy, gx, gy)``.
``arm_reach``
    Two-link planar arm driven by joint increments, state ``(th1, th2, gx, gy)``.
``push_block``
    Point gripper that pushes a square block by contact projection,
    state ``(px, py, bx, by, gx, gy)``.
``chain_reach``
    Ten-joint planar chain, state ``(th1..th10, gx, gy)``.

The dynamics are plain numpy functions over arrays whose last axis is the state,
so the same code steps one environment or a whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ENV_IDS = ("point_reach", "arm_reach", "push_block", "chain_reach")

HORIZON = 50
SUCCESS_EPS = 0.05

POINT_DT = 0.1
ARM_DT = 0.1
ARM_LINKS = np.array([0.5, 0.5])
PUSH_STEP = 0.05
CONTACT_RADIUS = 0.1
PUSH_GOAL_RANGE = (0.3, 0.4)
PUSH_BLOCK_SHARE = 0.5
PUSH_BLOCK_BOX = 0.5
PUSH_MIN_GAP = 0.3
CHAIN_DT = 0.05
CHAIN_JOINTS = 10
CHAIN_LINKS = np.full(CHAIN_JOINTS, 0.1)
WORKSPACE = 1.0
HOME_TIP_ANGLE = np.pi / 4


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    state_dim: int
    action_dim: int
    horizon: int = HORIZON
    success_eps: float = SUCCESS_EPS
    nontrivial_eps: float = 0.5

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.success_eps < self.nontrivial_eps:
            raise ValueError("success_eps must be smaller than nontrivial_eps")


@dataclass
class EnvState:
    """State vector plus the timestep index within the episode."""

    vector: np.ndarray
    t: int = 0


_SPECS = {
    "point_reach": EnvSpec("point_reach", 6, 2, nontrivial_eps=0.5),
    "arm_reach": EnvSpec("arm_reach", 4, 2, nontrivial_eps=0.5),
    "push_block": EnvSpec("push_block", 6, 2, nontrivial_eps=0.3),
    "chain_reach": EnvSpec("chain_reach", CHAIN_JOINTS + 2, CHAIN_JOINTS, nontrivial_eps=0.3),
}


def env_spec(env_id: str) -> EnvSpec:
    try:
        return _SPECS[env_id]
    except KeyError:
        raise ValueError(f"unknown env_id {env_id!r}; expected one of {ENV_IDS}") from None


# -- kinematics ---------------------------------------------------------------


def planar_fk(angles: np.ndarray, links: np.ndarray) -> np.ndarray:
    """Tip position of a planar serial chain with relative joint angles."""
    cum = np.cumsum(angles, axis=-1)
    x = np.sum(links * np.cos(cum), axis=-1)
    y = np.sum(links * np.sin(cum), axis=-1)
    return np.stack([x, y], axis=-1)


def planar_jacobian(angles: np.ndarray, links: np.ndarray) -> np.ndarray:
    """Tip Jacobian d(x, y)/d(angles), shape (..., 2, n_joints)."""
    cum = np.cumsum(angles, axis=-1)
    lx = links * np.cos(cum)
    ly = links * np.sin(cum)
    # joint i moves every link from i outwards
    jx = -np.flip(np.cumsum(np.flip(ly, -1), -1), -1)
    jy = np.flip(np.cumsum(np.flip(lx, -1), -1), -1)
    return np.stack([jx, jy], axis=-2)


def effector(env_id: str, x: np.ndarray) -> np.ndarray:
    """Task-relevant position: point, arm tip, block or chain tip."""
    x = np.asarray(x, dtype=float)
    if env_id == "point_reach":
        return x[..., 0:2]
    if env_id == "arm_reach":
        return planar_fk(x[..., 0:2], ARM_LINKS)
    if env_id == "push_block":
        return x[..., 2:4]
    if env_id == "chain_reach":
        return planar_fk(x[..., :CHAIN_JOINTS], CHAIN_LINKS)
    raise ValueError(f"unknown env_id {env_id!r}")


def goal(x: np.ndarray) -> np.ndarray:
    return np.asarray(x)[..., -2:]


def goal_distance(env_id: str, state) -> float | np.ndarray:
    x = state.vector if isinstance(state, EnvState) else np.asarray(state, dtype=float)
    d = np.linalg.norm(effector(env_id, x) - goal(x), axis=-1)
    return float(d) if d.ndim == 0 else d


# -- dynamics -----------------------------------------------------------------


def _push(p: np.ndarray, b: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Point gripper against a square block of half-width CONTACT_RADIUS.

    Contact distance is the L-infinity norm. An overlap is resolved along the
    face normal of least penetration: the block takes PUSH_BLOCK_SHARE of the
    penetration and the gripper is pushed back by the rest, so both end flush.
    """
    p_new = p + PUSH_STEP * a
    diff = b - p_new
    contact = np.max(np.abs(diff), axis=-1, keepdims=True) < CONTACT_RADIUS
    axis = np.argmax(np.abs(diff), axis=-1)[..., None]
    face = (np.arange(2) == axis) & contact
    # coincident along the face axis: push the way the gripper moved
    sign = np.where(diff != 0, np.sign(diff), np.where(a != 0, np.sign(a), 1.0))
    pen = np.where(face, CONTACT_RADIUS - np.abs(diff), 0.0) * sign
    return p_new - (1.0 - PUSH_BLOCK_SHARE) * pen, b + PUSH_BLOCK_SHARE * pen


def contact_distance(p, b):
    """L-infinity gripper-to-block distance used for contact."""
    return np.max(np.abs(np.asarray(b) - np.asarray(p)), axis=-1)


def dynamics(env_id: str, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Next state for (batched) state ``x`` and action ``a``; actions are clamped here."""
    x = np.asarray(x, dtype=float)
    a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
    out = x.copy()
    if env_id == "point_reach":
        v = np.clip(x[..., 2:4] + POINT_DT * a, -1.0, 1.0)
        out[..., 0:2] = np.clip(x[..., 0:2] + POINT_DT * v, -WORKSPACE, WORKSPACE)
        out[..., 2:4] = v
    elif env_id == "arm_reach":
        out[..., 0:2] = x[..., 0:2] + ARM_DT * a
    elif env_id == "push_block":
        out[..., 0:2], out[..., 2:4] = _push(x[..., 0:2], x[..., 2:4], a)
    elif env_id == "chain_reach":
        out[..., :CHAIN_JOINTS] = x[..., :CHAIN_JOINTS] + CHAIN_DT * a
    else:
        raise ValueError(f"unknown env_id {env_id!r}")
    return out


def step(env_id: str, state: EnvState, action) -> EnvState:
    spec = env_spec(env_id)
    if state.t >= spec.horizon:
        raise RuntimeError(f"cannot step past the horizon ({spec.horizon})")
    action = np.asarray(action, dtype=float)
    if action.shape != (spec.action_dim,):
        raise ValueError(f"action must have shape ({spec.action_dim},), got {action.shape}")
    return EnvState(dynamics(env_id, state.vector, action), state.t + 1)


# -- reset --------------------------------------------------------------------


def _sample_goal(env_id: str, rng: np.random.Generator) -> np.ndarray:
    if env_id == "point_reach":
        return rng.uniform(-0.8, 0.8, size=2)
    # reach tasks: uniform over an annulus inside the reachable disc
    reach = 1.0 if env_id == "arm_reach" else float(CHAIN_LINKS.sum())
    r = reach * np.sqrt(rng.uniform(0.2**2, 0.9**2))
    # keep goals within reach of the 50-step joint-speed budget from the home pose
    phi = HOME_TIP_ANGLE + rng.uniform(-1.5, 1.5)
    return np.array([r * np.cos(phi), r * np.sin(phi)])


def reset(env_id: str, rng: np.random.Generator) -> EnvState:
    """Start a new episode: home pose with small noise and a non-trivial goal."""
    spec = env_spec(env_id)
    if env_id == "point_reach":
        body = np.concatenate([rng.uniform(-0.1, 0.1, size=2), np.zeros(2)])
    elif env_id == "arm_reach":
        body = np.array([0.0, np.pi / 2]) + rng.uniform(-0.1, 0.1, size=2)
    elif env_id == "push_block":
        p = rng.uniform(-0.05, 0.05, size=2)
        while True:
            b = rng.uniform(-PUSH_BLOCK_BOX, PUSH_BLOCK_BOX, size=2)
            if contact_distance(p, b) >= PUSH_MIN_GAP:
                break
        # goal a short push away so the 50-step budget covers approach and push
        r = rng.uniform(PUSH_GOAL_RANGE[0], PUSH_GOAL_RANGE[1])
        phi = rng.uniform(-np.pi, np.pi)
        g = b + r * np.array([np.cos(phi), np.sin(phi)])
        return EnvState(np.concatenate([p, b, g]), 0)
    else:
        body = np.full(CHAIN_JOINTS, 0.15) + rng.uniform(-0.05, 0.05, size=CHAIN_JOINTS)
    while True:
        x = np.concatenate([body, _sample_goal(env_id, rng)])
        if goal_distance(env_id, x) >= spec.nontrivial_eps:
            return EnvState(x, 0)


class Env:
    """Stateful convenience wrapper around the pure functions above."""

    def __init__(self, env_id: str, rng: np.random.Generator):
        self.spec = env_spec(env_id)
        self.env_id = env_id
        self.rng = rng
        self.state: EnvState | None = None

    def reset(self) -> np.ndarray:
        self.state = reset(self.env_id, self.rng)
        return self.state.vector.copy()

    def step(self, action) -> tuple[np.ndarray, bool]:
        """Advance one step; returns the next state vector and whether t reached the horizon."""
        self.state = step(self.env_id, self.state, action)
        return self.state.vector.copy(), self.state.t == self.spec.horizon
