"""The M-agent bit game: win a step when exactly one agent plays 1.

Each step every agent picks a bit; the team scores ``reward_scale`` when the
bits sum to exactly one.  Observations are the agent's one-hot index
concatenated with the previous joint action (all zeros at t=0).  The game is
this package's exact-verification anchor: closed-form winning probabilities
for i.i.d. Bernoulli play are implemented next to a brute-force enumeration
oracle, and the two must agree to 1e-12.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .base import EnvSpec, Transition, VecEnv

HORIZON = 25
REWARD_SCALE = 3.0


def bitgame_spec(num_agents: int = 3, horizon: int = HORIZON) -> EnvSpec:
    return EnvSpec(
        name="bitgame",
        num_agents=num_agents,
        obs_dim=2 * num_agents,
        num_actions=2,
        horizon=horizon,
    )


@dataclass
class BitGameState:
    t: int = 0
    prev_joint_action: np.ndarray = field(default=None)


def _observe(prev: np.ndarray, num_agents: int) -> np.ndarray:
    obs = np.zeros((num_agents, 2 * num_agents))
    obs[:, :num_agents] = np.eye(num_agents)
    obs[:, num_agents:] = prev
    return obs


class BitGame:
    """Single-instance bit game; see BitGameVec for the batched version."""

    def __init__(self, num_agents: int = 3, reward_scale: float = REWARD_SCALE,
                 horizon: int = HORIZON):
        self.spec = bitgame_spec(num_agents, horizon)
        self.reward_scale = reward_scale
        self.state = BitGameState()

    def reset(self) -> np.ndarray:
        self.state = BitGameState(t=0, prev_joint_action=np.zeros(self.spec.num_agents, dtype=np.int64))
        return _observe(self.state.prev_joint_action, self.spec.num_agents)

    def step(self, joint_action) -> Transition:
        joint_action = np.asarray(joint_action, dtype=np.int64)
        s = self.state
        if s.t >= self.spec.horizon:
            raise ConfigError("episode is over; call reset()")
        reward = self.reward_scale * float(joint_action.sum() == 1)
        s.prev_joint_action = joint_action.copy()
        s.t += 1
        return Transition(
            obs=_observe(s.prev_joint_action, self.spec.num_agents),
            actions=joint_action,
            reward=reward,
            done=s.t >= self.spec.horizon,
            t=s.t - 1,
        )


class BitGameVec(VecEnv):
    def __init__(self, count: int, seed: int = 0, num_agents: int = 3,
                 reward_scale: float = REWARD_SCALE, horizon: int = HORIZON):
        self.spec = bitgame_spec(num_agents, horizon)
        self.count = count
        self.reward_scale = reward_scale
        self._prev = None
        self._t = 0

    def reset(self) -> np.ndarray:
        m = self.spec.num_agents
        self._prev = np.zeros((self.count, m), dtype=np.int64)
        self._t = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        m = self.spec.num_agents
        obs = np.zeros((self.count, m, 2 * m))
        obs[:, :, :m] = np.eye(m)
        obs[:, :, m:] = self._prev[:, None, :]
        return obs

    def step(self, actions: np.ndarray):
        rewards = self.reward_scale * (actions.sum(axis=1) == 1).astype(np.float64)
        self._prev = actions.astype(np.int64)
        self._t += 1
        dones = np.full(self.count, self._t >= self.spec.horizon)
        return self._obs(), rewards, dones


# --- closed-form analysis of i.i.d. Bernoulli play -------------------------


def static_win_prob(num_agents: int, p: float) -> float:
    """P(sum of bits = 1) when all agents play 1 with probability p.

    Maximized at p = 1/M.
    """
    return num_agents * p * (1.0 - p) ** (num_agents - 1)


def aht_win_prob(p_aht: float) -> float:
    """Winning probability with one controlled agent among two Bernoulli(1/3)
    teammates (M=3).

    Derived by partitioning on the teammates' bit sum; the p_aht terms cancel,
    so the result is 4/9 for every policy.
    """
    teammates_one = 2.0 * (1.0 / 3.0) * (2.0 / 3.0)
    teammates_zero = (2.0 / 3.0) * (2.0 / 3.0)
    return teammates_one * (1.0 - p_aht) + p_aht * teammates_zero


def shared_naht_win_prob(p: float) -> float:
    """Winning probability when two controlled agents share Bernoulli(p) and
    the third agent plays Bernoulli(1/3) (M=3).

    Equals (1 - p)(1/3 + p); maximized at p = 1/3 with value 4/9.
    """
    return (1.0 - p) * (1.0 / 3.0 + p)


def asym_naht_win_prob(p_naht: float) -> float:
    """Winning probability when one controlled agent always plays 0, the other
    plays Bernoulli(p_naht), and the third plays Bernoulli(1/3) (M=3).

    Equals 1/3 + p_naht/3; maximized at p_naht = 1 with value 2/3.
    """
    return 1.0 / 3.0 + p_naht / 3.0


def brute_force_win_prob(policies) -> float:
    """Enumeration oracle: sum joint-outcome probabilities where the bit sum
    is exactly one.  Independent of the closed forms above.
    """
    ps = [float(p) for p in policies]
    if len(ps) > 20:
        raise ConfigError("brute force enumeration limited to 20 agents")
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(ps)):
        if sum(bits) != 1:
            continue
        prob = 1.0
        for b, p in zip(bits, ps):
            prob *= p if b else (1.0 - p)
        total += prob
    return total


def argmax_static_win_prob(num_agents: int, tol: float = 1e-8) -> float:
    """Locate argmax_p of static_win_prob by grid search plus refinement."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        grid = np.linspace(lo, hi, 101)
        vals = [static_win_prob(num_agents, p) for p in grid]
        best = int(np.argmax(vals))
        lo = grid[max(best - 1, 0)]
        hi = grid[min(best + 1, len(grid) - 1)]
    return 0.5 * (lo + hi)


def aht_constancy_gap(points: int = 101) -> float:
    """max - min of aht_win_prob over a grid of p_aht values."""
    vals = [aht_win_prob(p) for p in np.linspace(0.0, 1.0, points)]
    return max(vals) - min(vals)


def lemma_table():
    """Rows of (quantity, analytic, brute_force, abs_diff) cross-checking every
    closed form against the enumeration oracle.
    """
    third = 1.0 / 3.0
    rows = []

    def row(name, analytic, policies):
        oracle = brute_force_win_prob(policies)
        rows.append((name, analytic, oracle, abs(analytic - oracle)))

    row("static_M3_p_one_third", static_win_prob(3, third), [third] * 3)
    row("static_M2_p_half", static_win_prob(2, 0.5), [0.5, 0.5])
    for p in (0.0, 0.37, 1.0):
        row(f"aht_p_{p:g}", aht_win_prob(p), [p, third, third])
    for p in (0.0, third, 1.0):
        row(f"shared_naht_p_{p:g}", shared_naht_win_prob(p), [p, p, third])
    for p in (0.0, 0.5, 1.0):
        row(f"asym_naht_p_{p:g}", asym_naht_win_prob(p), [0.0, p, third])
    return rows
