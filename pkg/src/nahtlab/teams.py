"""Policy registry and per-episode team sampling.

A team of M slots is assembled at every episode start: N slots run the shared
controlled policy and the remaining M-N are filled by one uncontrolled team
drawn uniformly from the registry.  Drawing whole teams (rather than mixing
individuals across teams) preserves the coordination conventions the
evaluation is probing; an uncontrolled member keeps the slot index it was
trained with so id-conditioned roles survive the merge.

Uncontrolled policies come in three kinds: stateless Bernoulli bit players,
scripted pursuit conventions (chaser / interceptor / flanker), and network
checkpoints produced by self-play training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .envs.base import EnvSpec
from .envs.pursuit import ACTION_DIRS, PursuitConfig, _advance, prey_policy_vec
from .errors import ConfigError

SCRIPTED_CONVENTIONS = ("chaser", "interceptor", "flanker")


@dataclass(frozen=True)
class PolicyHandle:
    id: str
    kind: str  # bernoulli | scripted | network
    p: float | None = None
    convention: str | None = None
    noise: float = 0.0
    checkpoint: str | None = None
    env_fingerprint: tuple | None = None
    seed: int | None = None
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("bernoulli", "scripted", "network"):
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.kind == "bernoulli" and not (0.0 <= self.p <= 1.0):
            raise ConfigError("bernoulli probability must lie in [0, 1]")
        if self.kind == "scripted" and self.convention not in SCRIPTED_CONVENTIONS:
            raise ConfigError(f"unknown scripted convention {self.convention!r}")

    @property
    def owns_recurrent_state(self) -> bool:
        return self.kind == "network"


@dataclass(frozen=True)
class UncontrolledTeam:
    id: str
    members: tuple[PolicyHandle, ...]
    tags: tuple[str, ...] = ()

    @property
    def seed(self):
        return self.members[0].seed


@dataclass(frozen=True)
class TeamSpec:
    """Binding of the M agent slots to policies for one episode."""

    slots: tuple[PolicyHandle, ...]
    controlled_mask: tuple[bool, ...]
    uncontrolled_id: str = ""

    def __post_init__(self):
        if len(self.slots) != len(self.controlled_mask):
            raise ConfigError("slots and controlled_mask lengths differ")

    @property
    def num_agents(self) -> int:
        return len(self.slots)

    @property
    def n_controlled(self) -> int:
        return sum(self.controlled_mask)


@dataclass(frozen=True)
class SamplingScheme:
    mode: str  # naht_uniform | aht_fixed_n1 | selfplay_full
    replacement: bool = True  # inert under team-level draws; kept for the schema

    def __post_init__(self):
        if self.mode not in ("naht_uniform", "aht_fixed_n1", "selfplay_full"):
            raise ConfigError(f"unknown sampling mode {self.mode!r}")


def sample_team(scheme: SamplingScheme, uncontrolled: list[UncontrolledTeam],
                controlled: PolicyHandle, num_agents: int,
                rng: np.random.Generator) -> TeamSpec:
    """Draw one episode's team.

    naht_uniform: N ~ Uniform{1..M-1}; aht_fixed_n1: N = 1; selfplay_full:
    N = M.  Controlled slot positions are uniform over the (M choose N)
    placements; the M-N open slots take the members of one uniformly drawn
    uncontrolled team, each keeping its original slot index.
    """
    m = num_agents
    if m < 2:
        raise ConfigError("team sampling needs at least two agents")
    if scheme.mode == "naht_uniform":
        n = int(rng.integers(1, m))
    elif scheme.mode == "aht_fixed_n1":
        n = 1
    else:
        n = m
    if n < m and not uncontrolled:
        raise ConfigError("uncontrolled set is empty but N < M")

    if n == m:
        return TeamSpec(slots=(controlled,) * m, controlled_mask=(True,) * m,
                        uncontrolled_id="")
    team = uncontrolled[int(rng.integers(len(uncontrolled)))]
    return place_team(controlled, team, m, n, rng)


def place_team(controlled: PolicyHandle, team: UncontrolledTeam, num_agents: int,
               n_controlled: int, rng: np.random.Generator) -> TeamSpec:
    """Bind N controlled slots (uniform placement) and fill the rest with the
    uncontrolled team's members at their own slot indices."""
    m = num_agents
    if len(team.members) != m:
        raise ConfigError(f"team {team.id!r} has {len(team.members)} members, expected {m}")
    positions = set(int(i) for i in rng.choice(m, size=n_controlled, replace=False))
    mask = tuple(i in positions for i in range(m))
    slots = tuple(controlled if mask[i] else team.members[i] for i in range(m))
    return TeamSpec(slots=slots, controlled_mask=mask, uncontrolled_id=team.id)


def selfplay_spec(team: UncontrolledTeam) -> TeamSpec:
    return TeamSpec(slots=tuple(team.members),
                    controlled_mask=(False,) * len(team.members),
                    uncontrolled_id=team.id)


def make_bernoulli_team(p: float, size: int, team_id: str | None = None,
                        tags: tuple[str, ...] = ()) -> UncontrolledTeam:
    tid = team_id or f"bernoulli_p{p:g}"
    members = tuple(
        PolicyHandle(id=f"{tid}_m{k}", kind="bernoulli", p=p, tags=tags)
        for k in range(size)
    )
    return UncontrolledTeam(id=tid, members=members, tags=tags)


def scripted_pursuit_policies(noise: float = 0.0) -> list[PolicyHandle]:
    """One handle per scripted convention; see ScriptedPursuitRuntime for the
    geometry of each."""
    return [
        PolicyHandle(id=f"pursuit_{c}", kind="scripted", convention=c, noise=noise)
        for c in SCRIPTED_CONVENTIONS
    ]


def scripted_pursuit_teams(noise: float = 0.0, size: int = 3) -> list[UncontrolledTeam]:
    """Homogeneous-convention teams, one per scripted convention."""
    teams = []
    for c in SCRIPTED_CONVENTIONS:
        members = tuple(
            PolicyHandle(id=f"{c}s_m{k}", kind="scripted", convention=c, noise=noise)
            for k in range(size)
        )
        teams.append(UncontrolledTeam(id=f"{c}s", members=members))
    return teams


# --- runtime policies --------------------------------------------------------


class RuntimePolicy:
    """Batched per-rollout execution of one policy over its assigned rows."""

    def reset(self, rows: int):
        return None

    def act(self, state, obs, slot_ids, prev_actions, u_act, u_noise):
        """Return (actions [R], logp [R] or None, new state)."""
        raise NotImplementedError


class BernoulliRuntime(RuntimePolicy):
    def __init__(self, p: float):
        self.p = p

    def act(self, state, obs, slot_ids, prev_actions, u_act, u_noise):
        return (u_act < self.p).astype(np.int64), None, state


class ScriptedPursuitRuntime(RuntimePolicy):
    """Deterministic pursuit conventions computed from the egocentric obs.

    chaser       head straight for the prey's current position
    interceptor  head for the prey's one-step-lookahead position
    flanker      approach the prey from the side opposite the nearest other
                 predator (maximal angular separation), converging when close
    """

    def __init__(self, convention: str, noise: float = 0.0,
                 config: PursuitConfig | None = None):
        self.convention = convention
        self.noise = noise
        self.cfg = config or PursuitConfig()

    def _target(self, own, vel, mates, prey, prey_vel):
        cfg = self.cfg
        if self.convention == "chaser":
            return prey
        if self.convention == "interceptor":
            preds = np.concatenate([own[:, None, :], mates], axis=1)
            prey_act = prey_policy_vec(preds, prey, prey_vel, cfg)
            nxt, _ = _advance(prey, prey_vel, ACTION_DIRS[prey_act], cfg, cfg.prey_max_speed)
            return nxt
        # flanker
        d_own = own - prey
        dist_own = np.linalg.norm(d_own, axis=-1, keepdims=True)
        mate_d = np.linalg.norm(mates - prey[:, None, :], axis=-1)
        nearest = mates[np.arange(len(own)), np.argmin(mate_d, axis=1)]
        u = nearest - prey
        norm_u = np.linalg.norm(u, axis=-1, keepdims=True)
        u = np.where(norm_u > 1e-9, u / np.where(norm_u > 1e-9, norm_u, 1.0),
                     np.array([1.0, 0.0]))
        offset = np.minimum(dist_own, 0.5)
        target = prey - u * offset
        close = dist_own[:, 0] <= 1.5 * cfg.collision_radius
        return np.where(close[:, None], prey, target)

    def act(self, state, obs, slot_ids, prev_actions, u_act, u_noise):
        cfg = self.cfg
        own, vel = obs[:, 0:2], obs[:, 2:4]
        mates = own[:, None, :] + obs[:, 4:8].reshape(-1, 2, 2)
        prey = own + obs[:, 8:10]
        prey_vel = obs[:, 10:12]
        target = self._target(own, vel, mates, prey, prey_vel)
        dists = []
        for a in range(len(ACTION_DIRS)):
            dirs = np.broadcast_to(ACTION_DIRS[a], own.shape)
            p, _ = _advance(own, vel, dirs, cfg, cfg.predator_max_speed)
            dists.append(np.linalg.norm(p - target, axis=-1))
        actions = np.argmin(np.stack(dists, axis=-1), axis=-1).astype(np.int64)
        if self.noise > 0.0:
            randomized = np.minimum(
                (u_act * len(ACTION_DIRS)).astype(np.int64), len(ACTION_DIRS) - 1
            )
            actions = np.where(u_noise < self.noise, randomized, actions)
        return actions, None, state


def make_runtime(handle: PolicyHandle, env_spec: EnvSpec,
                 pursuit_config: PursuitConfig | None = None) -> RuntimePolicy:
    if handle.kind == "bernoulli":
        return BernoulliRuntime(handle.p)
    if handle.kind == "scripted":
        return ScriptedPursuitRuntime(handle.convention, handle.noise, pursuit_config)
    from .poam.nets import load_policy_runtime

    return load_policy_runtime(handle.checkpoint, env_spec)


# --- registry manifest -------------------------------------------------------


def save_manifest(teams: list[UncontrolledTeam], path) -> None:
    entries = []
    for team in teams:
        first = team.members[0]
        entry = {
            "id": team.id,
            "kind": first.kind,
            "seed": first.seed,
            "env": list(first.env_fingerprint) if first.env_fingerprint else None,
            "checkpoint_path": first.checkpoint,
            "tags": list(team.tags),
        }
        if first.kind == "bernoulli":
            entry["params"] = {"p": first.p, "size": len(team.members)}
        elif first.kind == "scripted":
            entry["params"] = {
                "conventions": [m.convention for m in team.members],
                "noise": first.noise,
            }
        entries.append(entry)
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")


def load_manifest(path, num_agents: int) -> list[UncontrolledTeam]:
    with open(path) as fh:
        entries = json.load(fh)
    teams = []
    for entry in entries:
        tid = entry["id"]
        tags = tuple(entry.get("tags", ()))
        kind = entry["kind"]
        params = entry.get("params", {})
        if kind == "bernoulli":
            team = make_bernoulli_team(params["p"], params.get("size", num_agents),
                                       team_id=tid, tags=tags)
        elif kind == "scripted":
            conventions = params["conventions"]
            members = tuple(
                PolicyHandle(id=f"{tid}_m{k}", kind="scripted", convention=c,
                             noise=params.get("noise", 0.0), tags=tags)
                for k, c in enumerate(conventions)
            )
            team = UncontrolledTeam(id=tid, members=members, tags=tags)
        elif kind == "network":
            fingerprint = tuple(entry["env"]) if entry.get("env") else None
            members = tuple(
                PolicyHandle(id=f"{tid}_m{k}", kind="network",
                             checkpoint=entry["checkpoint_path"],
                             env_fingerprint=fingerprint,
                             seed=entry.get("seed"), tags=tags)
                for k in range(num_agents)
            )
            team = UncontrolledTeam(id=tid, members=members, tags=tags)
        else:
            raise ConfigError(f"unknown registry kind {kind!r}")
        teams.append(team)
    return teams


def split_by_tag(teams: list[UncontrolledTeam], tag: str) -> list[UncontrolledTeam]:
    return [t for t in teams if tag in t.tags]


def train_selfplay_teammates(env_name: str, algorithm: str, seeds, out_dir,
                             env_params: dict | None = None, total_env_steps: int = 200_000,
                             hyper=None, width: int = 64, tags=("train",)) -> list[UncontrolledTeam]:
    """Train one self-play team per seed and register its checkpoint.

    Only independent PPO self-play is supported as the generating algorithm.
    Divergent seeds abort with a diagnostic rather than yielding a handle.
    """
    if algorithm != "ippo":
        raise ConfigError(f"unsupported self-play algorithm {algorithm!r}")
    from .poam.trainer import Learner, PpoHyper, TrainVariant

    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    teams = []
    for seed in seeds:
        learner = Learner(
            env_name=env_name,
            env_params=env_params or {},
            uncontrolled=[],
            variant=TrainVariant.named("ippo-selfplay"),
            hyper=hyper or PpoHyper(),
            width=width,
            emb_dim=0,
            seed=seed,
        )
        learner.run(total_env_steps)
        ckpt = out_dir / f"selfplay_{env_name}_{algorithm}_s{seed}.ckpt"
        learner.save_policy(ckpt)
        members = tuple(
            PolicyHandle(id=f"sp_{algorithm}_s{seed}_m{k}", kind="network",
                         checkpoint=str(ckpt),
                         env_fingerprint=learner.env_spec.fingerprint(),
                         seed=seed, tags=tuple(tags))
            for k in range(learner.env_spec.num_agents)
        )
        teams.append(UncontrolledTeam(id=f"sp_{algorithm}_s{seed}", members=members,
                                      tags=tuple(tags)))
    return teams
