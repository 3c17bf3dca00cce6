"""Vectorized episode collection.

All episodes of a batch run in lockstep; rows (episode, slot) are grouped by
policy handle so each policy acts once per timestep on its whole group.
Randomness is drawn from per-episode substreams, so results depend only on
(seed, team specs, parameters) and never on batching or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs.base import VecEnv
from .errors import ConfigError
from .rng import substream
from .teams import TeamSpec, make_runtime


@dataclass
class EpisodeBatch:
    """episodes x time x agent record of one collection run.

    prev_actions holds -1 where there is no previous action (t = 0); logp is
    populated only on controlled rows.  teammate_obs / teammate_actions hold,
    for each agent i, the other agents' observations and actions concatenated
    in ascending slot order excluding i.
    """

    obs: np.ndarray  # [E, T, M, D]
    actions: np.ndarray  # [E, T, M] int64
    prev_actions: np.ndarray  # [E, T, M] int64
    rewards: np.ndarray  # [E, T]
    dones: np.ndarray  # [E, T] bool
    logp: np.ndarray  # [E, T, M]
    controlled_mask: np.ndarray  # [E, M] bool
    teammate_obs: np.ndarray  # [E, T, M, (M-1)*D]
    teammate_actions: np.ndarray  # [E, T, M, M-1] int64
    team_ids: list
    gamma: float

    @property
    def episodes(self) -> int:
        return self.obs.shape[0]

    @property
    def horizon(self) -> int:
        return self.obs.shape[1]

    @property
    def num_agents(self) -> int:
        return self.obs.shape[2]

    def returns(self) -> np.ndarray:
        """Undiscounted per-episode return (evaluation uses gamma = 1)."""
        return self.rewards.sum(axis=1)


def episode_return(batch: EpisodeBatch, episode: int) -> float:
    return float(batch.rewards[episode].sum())


def build_teammate_targets(obs: np.ndarray, actions: np.ndarray):
    """Per-agent prediction targets: the other agents' obs and actions in
    ascending slot order excluding self."""
    e, t, m, d = obs.shape
    t_obs = np.empty((e, t, m, (m - 1) * d), dtype=obs.dtype)
    t_act = np.empty((e, t, m, m - 1), dtype=actions.dtype)
    for i in range(m):
        others = [j for j in range(m) if j != i]
        t_obs[:, :, i, :] = obs[:, :, others, :].reshape(e, t, (m - 1) * d)
        t_act[:, :, i, :] = actions[:, :, others]
    return t_obs, t_act


def collect_episodes(env: VecEnv, team_specs: list[TeamSpec], seed: int,
                     gamma: float = 0.99, runtime_resolver=None,
                     dtype=np.float64) -> EpisodeBatch:
    """Run one full episode per team spec and record everything.

    runtime_resolver maps a PolicyHandle to its RuntimePolicy; by default
    policies are instantiated from their handles (loading checkpoints as
    needed).
    """
    e_count = env.count
    if len(team_specs) != e_count:
        raise ConfigError("need exactly one team spec per environment instance")
    spec = env.spec
    m, t_len, d = spec.num_agents, spec.horizon, spec.obs_dim
    for ts in team_specs:
        if ts.num_agents != m:
            raise ConfigError(f"team has {ts.num_agents} slots, env expects {m}")

    if runtime_resolver is None:
        cache = {}
        pursuit_cfg = getattr(env, "cfg", None)

        def runtime_resolver(handle):
            if handle.id not in cache:
                cache[handle.id] = make_runtime(handle, spec, pursuit_config=pursuit_cfg)
            return cache[handle.id]

    # group rows by handle; fixed (episode, slot) ordering keeps runs reproducible
    groups = {}
    for e, ts in enumerate(team_specs):
        for slot, handle in enumerate(ts.slots):
            key = handle.id
            if key not in groups:
                groups[key] = (runtime_resolver(handle), [], [])
            groups[key][1].append(e)
            groups[key][2].append(slot)
    compiled = []
    for runtime, rows_e, rows_m in groups.values():
        rows_e = np.asarray(rows_e)
        rows_m = np.asarray(rows_m)
        compiled.append([runtime, rows_e, rows_m, runtime.reset(len(rows_e))])

    uniforms = np.empty((e_count, t_len, m, 2))
    for e in range(e_count):
        uniforms[e] = substream(seed, "act", e).random((t_len, m, 2))

    obs_rec = np.empty((e_count, t_len, m, d), dtype=dtype)
    act_rec = np.empty((e_count, t_len, m), dtype=np.int64)
    rew_rec = np.empty((e_count, t_len))
    done_rec = np.zeros((e_count, t_len), dtype=bool)
    logp_rec = np.zeros((e_count, t_len, m))

    obs = env.reset()
    prev_actions = np.full((e_count, m), -1, dtype=np.int64)
    for t in range(t_len):
        obs_rec[:, t] = obs
        joint = np.empty((e_count, m), dtype=np.int64)
        for entry in compiled:
            runtime, rows_e, rows_m, state = entry
            actions, logp, state = runtime.act(
                state,
                obs[rows_e, rows_m],
                rows_m,
                prev_actions[rows_e, rows_m],
                uniforms[rows_e, t, rows_m, 0],
                uniforms[rows_e, t, rows_m, 1],
            )
            entry[3] = state
            joint[rows_e, rows_m] = actions
            if logp is not None:
                logp_rec[rows_e, t, rows_m] = logp
        obs, rewards, dones = env.step(joint)
        act_rec[:, t] = joint
        rew_rec[:, t] = rewards
        done_rec[:, t] = dones
        prev_actions = joint

    t_obs, t_act = build_teammate_targets(obs_rec, act_rec)
    mask = np.array([ts.controlled_mask for ts in team_specs], dtype=bool)
    return EpisodeBatch(
        obs=obs_rec,
        actions=act_rec,
        prev_actions=np.concatenate(
            [np.full((e_count, 1, m), -1, dtype=np.int64), act_rec[:, :-1]], axis=1
        ),
        rewards=rew_rec,
        dones=done_rec,
        logp=logp_rec,
        controlled_mask=mask,
        teammate_obs=t_obs,
        teammate_actions=t_act,
        team_ids=[ts.uncontrolled_id for ts in team_specs],
        gamma=gamma,
    )


def run_episodes(make_env, team: TeamSpec, count: int, seed: int,
                 gamma: float = 0.99, runtime_resolver=None) -> EpisodeBatch:
    """Collect `count` episodes under one fixed team assignment."""
    env = make_env(count, seed)
    return collect_episodes(env, [team] * count, seed, gamma=gamma,
                            runtime_resolver=runtime_resolver)


def batch_debug_arrays(batch: EpisodeBatch) -> dict[str, np.ndarray]:
    """Float view of a batch for dumping via the checkpoint container."""
    return {
        "obs": batch.obs.astype(np.float64),
        "actions": batch.actions.astype(np.float64),
        "prev_actions": batch.prev_actions.astype(np.float64),
        "rewards": batch.rewards,
        "dones": batch.dones.astype(np.float64),
        "logp": batch.logp,
        "controlled_mask": batch.controlled_mask.astype(np.float64),
        "teammate_obs": batch.teammate_obs.astype(np.float64),
        "teammate_actions": batch.teammate_actions.astype(np.float64),
    }
