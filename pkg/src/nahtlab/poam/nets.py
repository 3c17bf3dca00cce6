"""POAM's five parameter groups and their forward passes.

  encoder      GRU over (own obs, own previous action) -> team embedding
  obs decoder  embedding -> predicted observations of the other M-1 agents
  act decoder  embedding -> categorical logits for the other M-1 agents
  actor        recurrent net over (own obs, embedding, agent id) -> logits
  critic       same inputs -> scalar value

All five live in one ParamStore; prefix groups "enc/obsdec/actdec" and
"actor/critic" update on separate optimizer schedules.  Embeddings are fed to
the actor and critic as detached inputs: the encoder trains on the
prediction loss only (a config flag for joint flow exists on the trainer).
Without agent modeling (the IPPO variant) the encoder/decoders are absent and
the actor/critic consume (own obs, agent id).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..envs.base import EnvSpec
from ..errors import ConfigError
from ..nn import GRU, MLP, Dense, LayerNorm, ops, sample_categorical
from ..nn.checkpoint import load_arrays, save_store
from ..nn.params import ParamStore
from ..nn.tensor import Tensor, no_grad
from ..rng import substream
from ..teams import RuntimePolicy

ED_PREFIXES = ("enc/", "obsdec/", "actdec/")
RL_PREFIXES = ("actor/", "critic/")


@dataclass(frozen=True)
class NetConfig:
    obs_dim: int
    num_actions: int
    num_agents: int
    width: int = 64
    emb_dim: int = 64
    use_agent_modeling: bool = True

    @property
    def encoder_in(self) -> int:
        return self.obs_dim + self.num_actions

    @property
    def actor_in(self) -> int:
        base = self.obs_dim + self.num_agents
        return base + self.emb_dim if self.use_agent_modeling else base


class RecurrentNet:
    """Two dense+LN+ReLU blocks, a GRU, and a linear head."""

    def __init__(self, store: ParamStore, prefix: str, din: int, width: int,
                 dout: int, rng, head_gain: float = 1.0, head_tanh: bool = False):
        self.blocks = []
        dims = [din, width, width]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            dense = Dense(store, f"{prefix}/fc{i}", a, b, rng, w_gain=np.sqrt(2.0))
            ln = LayerNorm(store, f"{prefix}/fc{i}/ln", b)
            self.blocks.append((dense, ln))
        self.gru = GRU(store, f"{prefix}/gru", width, width, rng)
        self.head = Dense(store, f"{prefix}/out", width, dout, rng, w_gain=head_gain)
        self.head_tanh = head_tanh

    def _trunk(self, x: Tensor) -> Tensor:
        for dense, ln in self.blocks:
            x = ops.relu(ln(dense(x)))
        return x

    def step(self, x: Tensor, h: Tensor):
        """One timestep: returns (head output, next hidden)."""
        h_new = self.gru.step(self._trunk(x), h)
        out = self.head(h_new)
        if self.head_tanh:
            out = ops.tanh(out)
        return out, h_new

    def sequence(self, xs: Tensor) -> Tensor:
        """[T, R, din] -> head outputs [T*R, dout] in time-major order."""
        t_len, rows, din = xs.data.shape
        flat = ops.reshape(xs, (t_len * rows, din))
        feats = ops.reshape(self._trunk(flat), (t_len, rows, -1))
        states = self.gru.sequence(feats)
        stacked = ops.concat(states, axis=0)
        out = self.head(stacked)
        if self.head_tanh:
            out = ops.tanh(out)
        return out

    def initial_state(self, rows: int, dtype=None) -> Tensor:
        return self.gru.initial_state(rows, dtype=dtype)


class PoamNets:
    def __init__(self, store: ParamStore, cfg: NetConfig, rng):
        self.store = store
        self.cfg = cfg
        if cfg.use_agent_modeling:
            self.encoder = RecurrentNet(store, "enc", cfg.encoder_in, cfg.width,
                                        cfg.emb_dim, rng, head_tanh=True)
            m1 = cfg.num_agents - 1
            self.obs_decoder = MLP(store, "obsdec", cfg.emb_dim, [cfg.width],
                                   m1 * cfg.obs_dim, rng)
            self.act_decoder = MLP(store, "actdec", cfg.emb_dim, [cfg.width],
                                   m1 * cfg.num_actions, rng)
        else:
            self.encoder = None
            self.obs_decoder = None
            self.act_decoder = None
        self.actor = RecurrentNet(store, "actor", cfg.actor_in, cfg.width,
                                  cfg.num_actions, rng, head_gain=0.01)
        self.critic = RecurrentNet(store, "critic", cfg.actor_in, cfg.width, 1, rng)

    def ed_param_names(self):
        return self.store.select(ED_PREFIXES)

    def rl_param_names(self):
        return self.store.select(RL_PREFIXES)

    # --- input assembly (plain numpy; embeddings enter detached) ---

    def encoder_input(self, obs: np.ndarray, prev_actions: np.ndarray) -> np.ndarray:
        """Concatenate obs with the one-hot previous action (zeros at t=0,
        encoded as prev action -1)."""
        onehot = np.zeros(obs.shape[:-1] + (self.cfg.num_actions,), dtype=obs.dtype)
        valid = prev_actions >= 0
        idx = np.nonzero(valid)
        onehot[idx + (prev_actions[valid],)] = 1.0
        return np.concatenate([obs, onehot], axis=-1)

    def policy_input(self, obs: np.ndarray, emb, slot_ids: np.ndarray) -> np.ndarray:
        ids = np.zeros(obs.shape[:-1] + (self.cfg.num_agents,), dtype=obs.dtype)
        idx = tuple(np.indices(obs.shape[:-1]))
        ids[idx + (slot_ids,)] = 1.0
        parts = [obs, emb, ids] if self.cfg.use_agent_modeling else [obs, ids]
        return np.concatenate(parts, axis=-1)

    def embed_sequence(self, obs: np.ndarray, prev_actions: np.ndarray) -> Tensor:
        """Encoder over [T, R, ...] arrays -> embeddings [T*R, emb_dim]."""
        x = Tensor(self.encoder_input(obs, prev_actions))
        return self.encoder.sequence(x)

    def decode(self, emb: Tensor):
        return self.obs_decoder(emb), self.act_decoder(emb)


class NetworkRuntime(RuntimePolicy):
    """Rollout-time execution of a (possibly modeling) policy.

    Keeps one encoder and one actor GRU state per assigned row; embeddings are
    recomputed step by step from the agent's own observation/action history.
    """

    def __init__(self, nets: PoamNets, greedy: bool = False):
        self.nets = nets
        self.greedy = greedy
        self.dtype = nets.store.dtype

    def reset(self, rows: int):
        state = {"actor": self.nets.actor.initial_state(rows, self.dtype)}
        if self.nets.cfg.use_agent_modeling:
            state["enc"] = self.nets.encoder.initial_state(rows, self.dtype)
        return state

    def act(self, state, obs, slot_ids, prev_actions, u_act, u_noise):
        obs = obs.astype(self.dtype)
        with no_grad():
            if self.nets.cfg.use_agent_modeling:
                x = Tensor(self.nets.encoder_input(obs, prev_actions))
                emb, state["enc"] = self.nets.encoder.step(x, state["enc"])
                emb = emb.data
            else:
                emb = None
            pin = Tensor(self.nets.policy_input(obs, emb, slot_ids))
            logits, state["actor"] = self.nets.actor.step(pin, state["actor"])
        logits = logits.data
        if self.greedy:
            actions = logits.argmax(axis=-1)
        else:
            actions = sample_categorical(logits, u_act)
        from .. import kernels as K

        logp = K.log_softmax_forward(logits)[np.arange(len(actions)), actions]
        return actions.astype(np.int64), logp.astype(np.float64), state


# --- checkpoint + sidecar ----------------------------------------------------


def save_policy(store: ParamStore, cfg: NetConfig, env_spec: EnvSpec, path) -> None:
    """Write the parameter checkpoint plus a JSON sidecar describing the
    architecture and environment fingerprint."""
    path = Path(path)
    save_store(store, path)
    sidecar = {
        "env_fingerprint": list(env_spec.fingerprint()),
        "width": cfg.width,
        "emb_dim": cfg.emb_dim,
        "use_agent_modeling": cfg.use_agent_modeling,
        "float_width": store.dtype.itemsize * 8,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_policy(path, expect_env: EnvSpec | None = None):
    """Load (store, nets, fingerprint) from a checkpoint written by save_policy."""
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise ConfigError(f"missing checkpoint sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    fingerprint = tuple(meta["env_fingerprint"])
    if expect_env is not None and fingerprint != expect_env.fingerprint():
        raise ConfigError(
            "checkpoint/environment fingerprint mismatch: "
            f"checkpoint={fingerprint} env={expect_env.fingerprint()}"
        )
    name, num_agents, obs_dim, num_actions, _horizon = fingerprint
    cfg = NetConfig(
        obs_dim=int(obs_dim),
        num_actions=int(num_actions),
        num_agents=int(num_agents),
        width=int(meta["width"]),
        emb_dim=int(meta["emb_dim"]),
        use_agent_modeling=bool(meta["use_agent_modeling"]),
    )
    store = ParamStore(dtype=np.float32 if meta["float_width"] == 32 else np.float64)
    nets = PoamNets(store, cfg, substream(0, "load-init"))
    arrays, _ = load_arrays(path)
    store.load_state(arrays)
    return store, nets, fingerprint


def load_policy_runtime(path, env_spec: EnvSpec, greedy: bool = False) -> NetworkRuntime:
    _, nets, _ = load_policy(path, expect_env=env_spec)
    return NetworkRuntime(nets, greedy=greedy)
