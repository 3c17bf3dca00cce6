"""Shared environment contract.

Environments are cooperative, homogeneous, fixed-horizon decision processes:
M agents observe locally, act simultaneously from a shared discrete action
set, and receive one team reward per step.  A vectorized implementation runs
`count` independent instances in lockstep; per-instance randomness comes from
counter-based substreams of (seed, episode index) so batching and worker
layout can never change results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    num_agents: int
    obs_dim: int
    num_actions: int
    horizon: int

    def __post_init__(self):
        if self.num_agents < 2:
            raise ConfigError("environments need at least two agents")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")

    def fingerprint(self) -> tuple:
        return (self.name, self.num_agents, self.obs_dim, self.num_actions, self.horizon)


@dataclass
class Transition:
    """Record of one environment step: joint action, shared reward, next obs."""

    obs: np.ndarray  # [M, obs_dim], observation after the step
    actions: np.ndarray  # [M] ints
    reward: float  # shared by all agents
    done: bool
    t: int  # index of the step just taken


class VecEnv:
    """Interface for lockstep batches of independent environment instances.

    Subclasses set .spec and .count and implement reset()/step().
    """

    spec: EnvSpec
    count: int

    def reset(self) -> np.ndarray:
        """Start `count` fresh episodes; returns obs [count, M, obs_dim]."""
        raise NotImplementedError

    def step(self, actions: np.ndarray):
        """Advance every instance; returns (obs, rewards [count], dones [count])."""
        raise NotImplementedError
