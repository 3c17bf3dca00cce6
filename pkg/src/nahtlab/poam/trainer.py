"""The learner: collect under per-episode team sampling, fit the
encoder-decoder, then run clipped-surrogate policy and value updates.

Update order per iteration: (1) encoder-decoder step(s) on the prediction
loss over controlled rows; (2) embeddings recomputed with the fresh encoder;
(3) PPO epochs of joint actor+critic updates, the actor on controlled
agent-steps only, the critic on all agent-steps (or controlled only with the
uncontrolled-data switch off).  Advantages are TD(lambda) target minus value,
standardized once per buffer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..envs import env_spec as get_env_spec
from ..envs import make_vec_env
from ..errors import ConfigError, TrainingDiverged
from ..nn.tensor import Tensor, no_grad
from ..nn.params import ParamStore
from ..nn import ops
from ..rng import substream
from ..rollout import EpisodeBatch, collect_episodes
from ..teams import PolicyHandle, SamplingScheme, UncontrolledTeam, make_runtime, sample_team
from .losses import ed_loss, normalize_advantages, ppo_actor_loss, td_lambda_targets, value_loss
from .nets import NetConfig, NetworkRuntime, PoamNets, save_policy

METRIC_COLUMNS = ["iteration", "env_steps", "mean_return", "ed_obs_mse",
                  "ed_act_nll", "value_loss", "actor_loss", "entropy"]


@dataclass(frozen=True)
class PpoHyper:
    buffer_episodes: int = 256
    epochs: int = 4
    minibatches: int = 3
    entropy_coef: float = 0.05
    clip: float = 0.1
    clip_value_loss: bool = False
    gamma: float = 0.99
    lam: float = 0.95
    lr: float = 5e-4
    ed_epochs: int = 1
    ed_minibatches: int = 1
    ed_lr: float = 5e-4

    def __post_init__(self):
        if min(self.buffer_episodes, self.epochs, self.minibatches,
               self.ed_epochs, self.ed_minibatches) < 1:
            raise ConfigError("epoch/minibatch/buffer counts must be positive")
        if not (0.0 < self.clip < 1.0):
            raise ConfigError("clip must lie in (0, 1)")
        if min(self.entropy_coef, self.gamma, self.lam, self.lr, self.ed_lr) < 0:
            raise ConfigError("hyperparameters must be non-negative")


@dataclass(frozen=True)
class TrainVariant:
    name: str
    use_agent_modeling: bool
    sampling: str
    critic_uses_uncontrolled_data: bool

    _TABLE = {
        "poam": (True, "naht_uniform", True),
        "ippo-naht": (False, "naht_uniform", True),
        "poam-aht": (True, "aht_fixed_n1", True),
        "poam-no-ucd": (True, "naht_uniform", False),
        "ippo-selfplay": (False, "selfplay_full", True),
    }

    @classmethod
    def named(cls, name: str) -> "TrainVariant":
        try:
            modeling, sampling, ucd = cls._TABLE[name]
        except KeyError:
            raise ConfigError(f"unknown variant {name!r}; options: {sorted(cls._TABLE)}")
        return cls(name, modeling, sampling, ucd)


class Learner:
    def __init__(self, env_name: str, env_params: dict, uncontrolled: list[UncontrolledTeam],
                 variant: TrainVariant, hyper: PpoHyper, width: int = 64,
                 emb_dim: int = 64, seed: int = 0, dtype=np.float32,
                 encoder_rl_grads: bool = False):
        self.env_name = env_name
        self.env_params = dict(env_params or {})
        self.env_spec = get_env_spec(env_name, self.env_params)
        self.uncontrolled = list(uncontrolled)
        self.variant = variant
        self.hyper = hyper
        self.seed = seed
        self.encoder_rl_grads = encoder_rl_grads
        if variant.sampling != "selfplay_full" and not self.uncontrolled:
            raise ConfigError("NAHT training needs a non-empty uncontrolled set")

        self.store = ParamStore(dtype=dtype)
        cfg = NetConfig(
            obs_dim=self.env_spec.obs_dim,
            num_actions=self.env_spec.num_actions,
            num_agents=self.env_spec.num_agents,
            width=width,
            emb_dim=emb_dim if variant.use_agent_modeling else 0,
            use_agent_modeling=variant.use_agent_modeling,
        )
        self.nets = PoamNets(self.store, cfg, substream(seed, "init"))
        self.runtime = NetworkRuntime(self.nets)
        self.scheme = SamplingScheme(variant.sampling)
        self.controlled_handle = PolicyHandle(
            id="__controlled__", kind="network",
            env_fingerprint=self.env_spec.fingerprint(), seed=seed,
        )
        self.iterations = 0
        self.env_steps = 0
        self._uc_runtimes = {}

    # --- plumbing -------------------------------------------------------

    def _derived_seed(self, label: str, *path) -> int:
        return int(substream(self.seed, label, *path).integers(2**62))

    def _resolver(self, env):
        def resolve(handle):
            if handle.id == self.controlled_handle.id:
                return self.runtime
            if handle.id not in self._uc_runtimes:
                self._uc_runtimes[handle.id] = make_runtime(
                    handle, env.spec, pursuit_config=getattr(env, "cfg", None))
            return self._uc_runtimes[handle.id]

        return resolve

    def collect(self) -> EpisodeBatch:
        it = self.iterations
        count = self.hyper.buffer_episodes
        env = make_vec_env(self.env_name, count, self._derived_seed("env", it),
                           self.env_params)
        specs = [
            sample_team(self.scheme, self.uncontrolled, self.controlled_handle,
                        self.env_spec.num_agents, substream(self.seed, "team", it, e))
            for e in range(count)
        ]
        return collect_episodes(env, specs, self._derived_seed("collect", it),
                                gamma=self.hyper.gamma,
                                runtime_resolver=self._resolver(env),
                                dtype=self.store.dtype)

    # --- preparation ------------------------------------------------------

    def _prepare_rows(self, batch: EpisodeBatch) -> dict:
        """Flatten episodes x agents into rows; keep [R, T, ...] layouts."""
        e, t, m, d = batch.obs.shape
        prep = {
            "episodes": e, "horizon": t, "agents": m,
            "obs": np.ascontiguousarray(batch.obs.transpose(0, 2, 1, 3)).reshape(e * m, t, d),
            "actions": np.ascontiguousarray(batch.actions.transpose(0, 2, 1)).reshape(e * m, t),
            "prev_actions": np.ascontiguousarray(batch.prev_actions.transpose(0, 2, 1)).reshape(e * m, t),
            "logp_old": np.ascontiguousarray(batch.logp.transpose(0, 2, 1)).reshape(e * m, t),
            "rewards": np.repeat(batch.rewards, m, axis=0),
            "dones": np.repeat(batch.dones, m, axis=0),
            "controlled": batch.controlled_mask.reshape(e * m),
            "slots": np.tile(np.arange(m), e),
            "row_episode": np.repeat(np.arange(e), m),
            "t_obs": np.ascontiguousarray(batch.teammate_obs.transpose(0, 2, 1, 3)).reshape(e * m, t, -1),
            "t_act": np.ascontiguousarray(batch.teammate_actions.transpose(0, 2, 1, 3)).reshape(e * m, t, m - 1),
        }
        return prep

    def _embed_rows(self, prep, rows) -> np.ndarray:
        """Detached embeddings [len(rows), T, emb_dim] for the given rows."""
        obs = prep["obs"][rows].transpose(1, 0, 2)
        prev = prep["prev_actions"][rows].transpose(1, 0)
        with no_grad():
            emb = self.nets.embed_sequence(obs.astype(self.store.dtype), prev)
        t = prep["horizon"]
        return emb.data.reshape(t, len(rows), -1).transpose(1, 0, 2)

    def _value_rows(self, prep, rows, emb) -> np.ndarray:
        """Critic values [len(rows), T] for the given rows (no grad)."""
        x = self._policy_input_seq(prep, rows, emb)
        with no_grad():
            v = self.nets.critic.sequence(Tensor(x))
        t = prep["horizon"]
        return v.data.reshape(t, len(rows)).transpose(1, 0).astype(np.float64)

    def _policy_input_seq(self, prep, rows, emb) -> np.ndarray:
        """[T, R, actor_in] input block for actor/critic over the given rows."""
        obs = prep["obs"][rows].transpose(1, 0, 2).astype(self.store.dtype)
        slot_ids = np.broadcast_to(prep["slots"][rows], obs.shape[:2])
        emb_t = None
        if self.nets.cfg.use_agent_modeling:
            emb_t = emb[rows].transpose(1, 0, 2).astype(self.store.dtype)
        return self.nets.policy_input(obs, emb_t, slot_ids)

    # --- updates ----------------------------------------------------------

    def _ed_update(self, prep):
        rows_all = np.nonzero(prep["controlled"])[0]
        hyper = self.hyper
        metrics = []
        ed_names = self.nets.ed_param_names()
        for epoch in range(hyper.ed_epochs):
            perm = substream(self.seed, "ed-shuffle", self.iterations, epoch).permutation(len(rows_all))
            for chunk in np.array_split(rows_all[perm], hyper.ed_minibatches):
                if len(chunk) == 0:
                    continue
                obs = prep["obs"][chunk].transpose(1, 0, 2).astype(self.store.dtype)
                prev = prep["prev_actions"][chunk].transpose(1, 0)
                t_obs = prep["t_obs"][chunk].transpose(1, 0, 2).astype(self.store.dtype)
                t_act = prep["t_act"][chunk].transpose(1, 0, 2)
                loss, obs_term, nll_term = ed_loss(self.nets, obs, prev, t_obs, t_act)
                if not np.isfinite(loss.data):
                    raise TrainingDiverged(
                        "encoder-decoder loss is not finite",
                        {"iteration": self.iterations, "epoch": epoch,
                         "obs_term": obs_term, "nll_term": nll_term})
                self.store.zero_grads(ed_names)
                loss.backward()
                grad_norm = self.store.grad_norm(ed_names)
                self.store.adam_step(hyper.ed_lr, names=ed_names)
                metrics.append((obs_term, nll_term, grad_norm))
        arr = np.array(metrics)
        return float(arr[:, 0].mean()), float(arr[:, 1].mean()), float(arr[:, 2].mean())

    def _actor_branch(self, prep, rows, emb, advantages):
        t = prep["horizon"]
        x = self._policy_input_seq(prep, rows, emb)
        if self.encoder_rl_grads and self.nets.cfg.use_agent_modeling:
            logits = self._joint_flow_sequence(self.nets.actor, prep, rows)
        else:
            logits = self.nets.actor.sequence(Tensor(x))
        actions = prep["actions"][rows].transpose(1, 0).reshape(-1)
        old_logp = prep["logp_old"][rows].transpose(1, 0).reshape(-1).astype(self.store.dtype)
        adv = advantages[rows].transpose(1, 0).reshape(-1).astype(self.store.dtype)
        weights = np.ones(t * len(rows), dtype=self.store.dtype)
        return ppo_actor_loss(logits, actions, old_logp, adv, weights,
                              self.hyper.clip, self.hyper.entropy_coef)

    def _critic_branch(self, prep, rows, emb, targets, old_values):
        t = prep["horizon"]
        x = self._policy_input_seq(prep, rows, emb)
        if self.encoder_rl_grads and self.nets.cfg.use_agent_modeling:
            v = self._joint_flow_sequence(self.nets.critic, prep, rows)
        else:
            v = self.nets.critic.sequence(Tensor(x))
        v = ops.reshape(v, (t * len(rows),))
        tgt = targets[rows].transpose(1, 0).reshape(-1).astype(self.store.dtype)
        weights = np.ones(t * len(rows), dtype=self.store.dtype)
        if self.hyper.clip_value_loss:
            old = old_values[rows].transpose(1, 0).reshape(-1).astype(self.store.dtype)
            return value_loss(v, tgt, weights, old_values=old, clip=self.hyper.clip)
        return value_loss(v, tgt, weights)

    def _joint_flow_sequence(self, net, prep, rows):
        """Study mode: embeddings stay on the tape so RL gradients reach the
        encoder; the RL optimizer step then covers encoder parameters too."""
        t = prep["horizon"]
        obs = prep["obs"][rows].transpose(1, 0, 2).astype(self.store.dtype)
        prev = prep["prev_actions"][rows].transpose(1, 0)
        emb = self.nets.embed_sequence(obs, prev)
        emb3 = ops.reshape(emb, (t, len(rows), self.nets.cfg.emb_dim))
        ids = np.zeros(obs.shape[:2] + (self.nets.cfg.num_agents,), dtype=self.store.dtype)
        idx = tuple(np.indices(obs.shape[:2]))
        ids[idx + (np.broadcast_to(prep["slots"][rows], obs.shape[:2]),)] = 1.0
        x = ops.concat([Tensor(obs), emb3, Tensor(ids)], axis=2)
        return net.sequence(x)

    def _rl_update(self, prep, emb, targets, advantages, old_values):
        hyper = self.hyper
        rl_names = self.nets.rl_param_names()
        if self.encoder_rl_grads and self.nets.cfg.use_agent_modeling:
            rl_names = rl_names + self.nets.ed_param_names()
        episodes = prep["episodes"]
        controlled = prep["controlled"]
        row_episode = prep["row_episode"]
        stats = []
        for epoch in range(hyper.epochs):
            perm = substream(self.seed, "shuffle", self.iterations, epoch).permutation(episodes)
            for mb in np.array_split(perm, hyper.minibatches):
                in_mb = np.isin(row_episode, mb)
                actor_rows = np.nonzero(in_mb & controlled)[0]
                if hyper.minibatches > 1 and len(actor_rows) == 0:
                    continue
                critic_rows = np.nonzero(
                    in_mb if self.variant.critic_uses_uncontrolled_data
                    else (in_mb & controlled))[0]
                a_loss, entropy, _ = self._actor_branch(prep, actor_rows, emb, advantages)
                c_loss = self._critic_branch(prep, critic_rows, emb, targets, old_values)
                total = ops.add(a_loss, c_loss)
                if not np.isfinite(total.data):
                    raise TrainingDiverged(
                        "actor/critic loss is not finite",
                        {"iteration": self.iterations, "epoch": epoch,
                         "actor_loss": float(a_loss.data),
                         "value_loss": float(c_loss.data),
                         "adv_stats": [float(advantages[actor_rows].mean()),
                                       float(advantages[actor_rows].std())]})
                self.store.zero_grads(rl_names)
                total.backward()
                grad_norm = self.store.grad_norm(rl_names)
                self.store.adam_step(hyper.lr, names=rl_names)
                stats.append((float(a_loss.data), float(c_loss.data), entropy, grad_norm))
        arr = np.array(stats)
        return (float(arr[:, 0].mean()), float(arr[:, 1].mean()),
                float(arr[:, 2].mean()), float(arr[:, 3].mean()))

    # --- one full iteration ----------------------------------------------

    def iteration(self) -> dict:
        batch = self.collect()
        prep = self._prepare_rows(batch)
        metrics = {
            "iteration": self.iterations,
            "env_steps": self.env_steps + batch.episodes * batch.horizon,
            "mean_return": float(batch.returns().mean()),
            "ed_obs_mse": None,
            "ed_act_nll": None,
            "grad_norm_ed": None,
        }

        if self.variant.use_agent_modeling:
            obs_mse, act_nll, ed_grad_norm = self._ed_update(prep)
            metrics["ed_obs_mse"] = obs_mse
            metrics["ed_act_nll"] = act_nll
            metrics["grad_norm_ed"] = ed_grad_norm

        rows_all = np.arange(prep["episodes"] * prep["agents"])
        value_rows = rows_all if self.variant.critic_uses_uncontrolled_data \
            else np.nonzero(prep["controlled"])[0]
        emb = None
        if self.variant.use_agent_modeling:
            emb = np.zeros((len(rows_all), prep["horizon"], self.nets.cfg.emb_dim),
                           dtype=self.store.dtype)
            need = np.unique(np.concatenate([value_rows, np.nonzero(prep["controlled"])[0]]))
            emb[need] = self._embed_rows(prep, need)

        values = np.zeros((len(rows_all), prep["horizon"]))
        values[value_rows] = self._value_rows(prep, value_rows, emb)
        if not batch.dones[:, -1].all():
            raise ConfigError("environments must terminate at the horizon")
        v_ext = np.concatenate([values, np.zeros((len(rows_all), 1))], axis=1)
        targets = td_lambda_targets(v_ext, prep["rewards"], prep["dones"],
                                    self.hyper.gamma, self.hyper.lam)
        advantages = targets - values
        advantages = normalize_advantages(advantages, prep["controlled"][:, None]
                                          & np.ones_like(advantages, dtype=bool))

        a_loss, v_loss, entropy, rl_grad_norm = self._rl_update(
            prep, emb, targets, advantages, values)
        metrics.update(value_loss=v_loss, actor_loss=a_loss, entropy=entropy,
                       grad_norm_rl=rl_grad_norm)

        self.iterations += 1
        self.env_steps += batch.episodes * batch.horizon
        return metrics

    def run(self, total_env_steps: int, metrics_path=None, checkpoint_dir=None,
            checkpoint_every: int = 0, log=None) -> list[dict]:
        """Iterate until the step budget is spent; optionally append metrics
        CSV rows and periodic checkpoints."""
        history = []
        writer = None
        fh = None
        if metrics_path is not None:
            fh = open(metrics_path, "w", newline="")
            writer = csv.writer(fh)
            writer.writerow(METRIC_COLUMNS)
        try:
            while self.env_steps < total_env_steps:
                m = self.iteration()
                history.append(m)
                if writer is not None:
                    writer.writerow(_metric_row(m))
                    fh.flush()
                if log is not None:
                    log(m)
                if (checkpoint_dir is not None and checkpoint_every
                        and self.iterations % checkpoint_every == 0):
                    self.save_policy(Path(checkpoint_dir) / f"it{self.iterations:06d}.ckpt")
        finally:
            if fh is not None:
                fh.close()
        return history

    def save_policy(self, path) -> None:
        save_policy(self.store, self.nets.cfg, self.env_spec, path)


def _metric_row(m: dict) -> list:
    row = []
    for col in METRIC_COLUMNS:
        v = m.get(col)
        if v is None:
            row.append("")
        elif isinstance(v, float):
            row.append(f"{v:.10g}")
        else:
            row.append(v)
    return row


def train_iteration(learner: Learner) -> dict:
    """One collect + update cycle; see Learner.iteration."""
    return learner.iteration()
