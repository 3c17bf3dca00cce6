"""Predator-prey pursuit on the bounded plane [-1, 1]^2.

Three predators with discrete acceleration controls chase one scripted prey
that greedily maximizes its one-step-lookahead distance to the nearest
predator.  The team scores +1 whenever at least two predators are within the
collision radius of the prey, minus a distance-shaping penalty.  The prey is
faster than the predators, so scoring requires a coordinated pincer rather
than a straight chase.

Physics: semi-implicit Euler with velocity damping, per-entity speed caps,
positions clamped to the arena.  Actions: 0 no-op, 1 +x, 2 -x, 3 +y, 4 -y.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..rng import substream
from .base import EnvSpec, Transition, VecEnv

ACTION_DIRS = np.array(
    [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
)
NUM_PREDATORS = 3
OBS_DIM = 12  # own pos, own vel, 2 teammate rel pos, prey rel pos, prey vel
_OTHERS = np.array([[1, 2], [0, 2], [0, 1]])


@dataclass(frozen=True)
class PursuitConfig:
    collision_radius: float = 0.1
    predator_max_speed: float = 0.08
    prey_max_speed: float = 0.104
    accel: float = 0.1
    damping: float = 0.75
    shaping_coef: float = 0.01
    horizon: int = 100
    prey_spawn_half_width: float = 0.5

    def __post_init__(self):
        values = (self.collision_radius, self.predator_max_speed, self.prey_max_speed,
                  self.accel, self.damping, self.shaping_coef, self.horizon)
        if any(v <= 0 for v in values):
            raise ConfigError("pursuit config values must be positive")
        if self.prey_max_speed <= self.predator_max_speed:
            raise ConfigError("prey must be faster than the predators")


def pursuit_spec(config: PursuitConfig | None = None) -> EnvSpec:
    horizon = (config or PursuitConfig()).horizon
    return EnvSpec(
        name="pursuit",
        num_agents=NUM_PREDATORS,
        obs_dim=OBS_DIM,
        num_actions=len(ACTION_DIRS),
        horizon=horizon,
    )


def _advance(pos, vel, dirs, cfg: PursuitConfig, max_speed: float):
    """One integration step: damp velocity, accelerate, cap speed, clamp position."""
    v = cfg.damping * vel + cfg.accel * dirs
    speed = np.linalg.norm(v, axis=-1, keepdims=True)
    over = speed > max_speed
    v = np.where(over, v * (max_speed / np.where(over, speed, 1.0)), v)
    p = np.clip(pos + v, -1.0, 1.0)
    return p, v


def prey_policy_vec(pred_pos, prey_pos, prey_vel, cfg: PursuitConfig) -> np.ndarray:
    """Greedy evasion: pick the action maximizing the post-move minimum
    distance to any predator (predators evaluated at their current positions).
    Ties resolve to the lowest action index.
    """
    scores = []
    for a in range(len(ACTION_DIRS)):
        dirs = np.broadcast_to(ACTION_DIRS[a], prey_pos.shape)
        p, _ = _advance(prey_pos, prey_vel, dirs, cfg, cfg.prey_max_speed)
        d = np.linalg.norm(pred_pos - p[..., None, :], axis=-1).min(axis=-1)
        scores.append(d)
    return np.argmax(np.stack(scores, axis=-1), axis=-1)


def observe_vec(pred_pos, pred_vel, prey_pos, prey_vel) -> np.ndarray:
    """Egocentric 12-dim observations for every predator.

    Layout per agent: own position (2), own velocity (2), relative positions
    of the other two predators in ascending index order (4), relative prey
    position (2), prey velocity (2).  All entries lie in [-2, 2].
    """
    e = pred_pos.shape[0]
    obs = np.empty((e, NUM_PREDATORS, OBS_DIM))
    rel_mates = pred_pos[:, _OTHERS, :] - pred_pos[:, :, None, :]  # [E, 3, 2, 2]
    obs[:, :, 0:2] = pred_pos
    obs[:, :, 2:4] = pred_vel
    obs[:, :, 4:8] = rel_mates.reshape(e, NUM_PREDATORS, 4)
    obs[:, :, 8:10] = prey_pos[:, None, :] - pred_pos
    obs[:, :, 10:12] = np.broadcast_to(prey_vel[:, None, :], (e, NUM_PREDATORS, 2))
    return obs


class PursuitVec(VecEnv):
    def __init__(self, count: int, seed: int = 0, config: PursuitConfig | None = None,
                 record_trace: bool = False):
        self.cfg = config or PursuitConfig()
        self.spec = pursuit_spec(self.cfg)
        self.count = count
        self.seed = seed
        self._episode_base = 0
        self.record_trace = record_trace
        self.trace: list[tuple] = []

    def reset(self) -> np.ndarray:
        half = self.cfg.prey_spawn_half_width
        self.pred_pos = np.empty((self.count, NUM_PREDATORS, 2))
        self.prey_pos = np.empty((self.count, 2))
        for i in range(self.count):
            rng = substream(self.seed, "env", self._episode_base + i)
            self.pred_pos[i] = rng.uniform(-1.0, 1.0, (NUM_PREDATORS, 2))
            self.prey_pos[i] = rng.uniform(-half, half, 2)
        self.pred_vel = np.zeros((self.count, NUM_PREDATORS, 2))
        self.prey_vel = np.zeros((self.count, 2))
        self._t = 0
        self._episode_base += self.count
        return observe_vec(self.pred_pos, self.pred_vel, self.prey_pos, self.prey_vel)

    def step(self, actions: np.ndarray):
        cfg = self.cfg
        prey_act = prey_policy_vec(self.pred_pos, self.prey_pos, self.prey_vel, cfg)
        self.pred_pos, self.pred_vel = _advance(
            self.pred_pos, self.pred_vel, ACTION_DIRS[actions], cfg, cfg.predator_max_speed
        )
        self.prey_pos, self.prey_vel = _advance(
            self.prey_pos, self.prey_vel, ACTION_DIRS[prey_act], cfg, cfg.prey_max_speed
        )
        dists = np.linalg.norm(self.pred_pos - self.prey_pos[:, None, :], axis=-1)
        caught = (dists <= cfg.collision_radius).sum(axis=1) >= 2
        rewards = caught.astype(np.float64) - cfg.shaping_coef * dists.sum(axis=1)
        self._t += 1
        dones = np.full(self.count, self._t >= cfg.horizon)
        if self.record_trace:
            self._record(actions, prey_act, rewards)
        return (
            observe_vec(self.pred_pos, self.pred_vel, self.prey_pos, self.prey_vel),
            rewards,
            dones,
        )

    def _record(self, actions, prey_act, rewards, episode: int = 0):
        t = self._t - 1
        for k in range(NUM_PREDATORS):
            self.trace.append((t, f"pred{k}", *self.pred_pos[episode, k],
                               *self.pred_vel[episode, k], int(actions[episode, k]),
                               rewards[episode]))
        self.trace.append((t, "prey", *self.prey_pos[episode], *self.prey_vel[episode],
                           int(prey_act[episode]), rewards[episode]))


def trace_to_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "entity", "x", "y", "vx", "vy", "action", "reward"])
        for row in trace:
            writer.writerow([row[0], row[1]] + [f"{v:.10g}" for v in row[2:6]]
                            + [row[6], f"{row[7]:.10g}"])


# --- single-instance API ----------------------------------------------------


@dataclass
class PursuitState:
    predator_pos: np.ndarray
    predator_vel: np.ndarray
    prey_pos: np.ndarray
    prey_vel: np.ndarray
    t: int = 0


def pursuit_reset(seed: int, episode: int = 0, config: PursuitConfig | None = None) -> PursuitState:
    cfg = config or PursuitConfig()
    rng = substream(seed, "env", episode)
    return PursuitState(
        predator_pos=rng.uniform(-1.0, 1.0, (NUM_PREDATORS, 2)),
        predator_vel=np.zeros((NUM_PREDATORS, 2)),
        prey_pos=rng.uniform(-cfg.prey_spawn_half_width, cfg.prey_spawn_half_width, 2),
        prey_vel=np.zeros(2),
    )


def prey_policy(state: PursuitState, config: PursuitConfig | None = None) -> int:
    cfg = config or PursuitConfig()
    act = prey_policy_vec(state.predator_pos[None], state.prey_pos[None],
                          state.prey_vel[None], cfg)
    return int(act[0])


def pursuit_observe(state: PursuitState, agent: int) -> np.ndarray:
    obs = observe_vec(state.predator_pos[None], state.predator_vel[None],
                      state.prey_pos[None], state.prey_vel[None])
    return obs[0, agent]


def pursuit_step(state: PursuitState, joint_action, config: PursuitConfig | None = None) -> Transition:
    cfg = config or PursuitConfig()
    if state.t >= cfg.horizon:
        raise ConfigError("episode is over")
    actions = np.asarray(joint_action, dtype=np.int64)
    prey_act = prey_policy_vec(state.predator_pos[None], state.prey_pos[None],
                               state.prey_vel[None], cfg)
    pp, pv = _advance(state.predator_pos[None], state.predator_vel[None],
                      ACTION_DIRS[actions][None], cfg, cfg.predator_max_speed)
    qp, qv = _advance(state.prey_pos[None], state.prey_vel[None],
                      ACTION_DIRS[prey_act], cfg, cfg.prey_max_speed)
    state.predator_pos, state.predator_vel = pp[0], pv[0]
    state.prey_pos, state.prey_vel = qp[0], qv[0]
    dists = np.linalg.norm(state.predator_pos - state.prey_pos, axis=-1)
    caught = (dists <= cfg.collision_radius).sum() >= 2
    reward = float(caught) - cfg.shaping_coef * float(dists.sum())
    state.t += 1
    return Transition(
        obs=np.stack([pursuit_observe(state, i) for i in range(NUM_PREDATORS)]),
        actions=actions,
        reward=reward,
        done=state.t >= cfg.horizon,
        t=state.t - 1,
    )
