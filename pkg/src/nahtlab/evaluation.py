"""Evaluation protocols: M-N scores, cross-play/self-play matrices,
seed-holdout OOD comparison, varying-N curves, and within-episode
encoder-decoder diagnostics.

Every protocol is a pure function of (seed, registry, checkpoints): repeated
calls produce byte-identical CSV files.  Policies act stochastically by
default to match training-time behavior; a greedy argmax flag exists but is
off by default.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envs import env_spec as get_env_spec
from .envs import make_vec_env
from .errors import ConfigError
from .nn.tensor import Tensor, no_grad
from .rng import substream
from .rollout import collect_episodes
from .teams import (
    PolicyHandle,
    TeamSpec,
    UncontrolledTeam,
    make_runtime,
    place_team,
    selfplay_spec,
)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _resolver(env, greedy: bool, overrides=None):
    cache = dict(overrides or {})

    def resolve(handle):
        if handle.id not in cache:
            if handle.kind == "network":
                from .poam.nets import load_policy_runtime

                cache[handle.id] = load_policy_runtime(handle.checkpoint, env.spec,
                                                       greedy=greedy)
            else:
                cache[handle.id] = make_runtime(handle, env.spec,
                                                pursuit_config=getattr(env, "cfg", None))
        return cache[handle.id]

    return resolve


def _derived(seed: int, *path) -> int:
    return int(substream(seed, *path).integers(2**62))


@dataclass
class MnScore:
    """Returns for every (N, episode) cell of the M-N evaluation."""

    returns_by_n: dict[int, np.ndarray]

    @property
    def raw_returns(self) -> np.ndarray:
        return np.concatenate([self.returns_by_n[n] for n in sorted(self.returns_by_n)])

    @property
    def mean(self) -> float:
        return float(self.raw_returns.mean())

    @property
    def ci95(self) -> float:
        raw = self.raw_returns
        if len(raw) < 2:
            return 0.0
        return float(1.96 * raw.std(ddof=1) / np.sqrt(len(raw)))


def _run_specs(env_name, env_params, specs, env_seed, act_seed, greedy, runtimes):
    env = make_vec_env(env_name, len(specs), env_seed, env_params)
    batch = collect_episodes(env, specs, act_seed,
                             runtime_resolver=_resolver(env, greedy, runtimes))
    return batch.returns()


def mn_score(controlled: PolicyHandle, uncontrolled: list[UncontrolledTeam],
             env_name: str, episodes: int, seed: int, env_params: dict | None = None,
             greedy: bool = False, runtimes=None,
             n_values=None) -> MnScore:
    """Sweep N in {1..M-1} with `episodes` episodes each: per episode one
    uncontrolled team is drawn uniformly and the controlled policy fills N
    uniformly placed slots.  Raw return count is exactly (M-1)*episodes."""
    spec = get_env_spec(env_name, env_params)
    m = spec.num_agents
    out = {}
    for n in n_values if n_values is not None else range(1, m):
        specs = []
        for e in range(episodes):
            rng = substream(seed, "mn", n, e)
            team = uncontrolled[int(rng.integers(len(uncontrolled)))]
            specs.append(place_team(controlled, team, m, n, rng))
        out[n] = _run_specs(env_name, env_params, specs,
                            _derived(seed, "mn-env", n), _derived(seed, "mn-act", n),
                            greedy, runtimes)
    return MnScore(out)


def selfplay_returns(team: UncontrolledTeam, env_name: str, episodes: int, seed: int,
                     env_params: dict | None = None, greedy: bool = False,
                     runtimes=None) -> np.ndarray:
    specs = [selfplay_spec(team)] * episodes
    return _run_specs(env_name, env_params, specs, _derived(seed, "sp-env", team.id),
                      _derived(seed, "sp-act", team.id), greedy, runtimes)


def controlled_selfplay_returns(controlled: PolicyHandle, env_name: str, episodes: int,
                                seed: int, env_params: dict | None = None,
                                greedy: bool = False, runtimes=None) -> np.ndarray:
    spec = get_env_spec(env_name, env_params)
    m = spec.num_agents
    team = TeamSpec(slots=(controlled,) * m, controlled_mask=(True,) * m)
    return _run_specs(env_name, env_params, [team] * episodes,
                      _derived(seed, "csp-env"), _derived(seed, "csp-act"),
                      greedy, runtimes)


@dataclass
class ScoreMatrix:
    labels: list[str]
    mean: np.ndarray
    ci95: np.ndarray

    def rows(self):
        """CSV rows (row_team, col_team, mean, ci95, kind), diagonal first."""
        out = []
        k = len(self.labels)
        for i in range(k):
            out.append((self.labels[i], self.labels[i], self.mean[i, i],
                        self.ci95[i, i], "self"))
        for i in range(k):
            for j in range(i + 1, k):
                if np.isnan(self.mean[i, j]):
                    continue
                out.append((self.labels[i], self.labels[j], self.mean[i, j],
                            self.ci95[i, j], "cross"))
        return out


def _ci(raw: np.ndarray) -> float:
    if len(raw) < 2:
        return 0.0
    return float(1.96 * raw.std(ddof=1) / np.sqrt(len(raw)))


def crossplay_matrix(teams: list[UncontrolledTeam], env_name: str, episodes: int,
                     seed: int, env_params: dict | None = None, greedy: bool = False,
                     runtimes=None, pairing: str = "all") -> ScoreMatrix:
    """Self-play scores on the diagonal; merged-team M-N scores off it.

    pairing="all" evaluates every unordered pair; "linear" only the ring
    (i, i+1) so cost stays linear in the number of teams.
    """
    if len(teams) < 2:
        raise ConfigError("cross-play needs at least two teams")
    spec = get_env_spec(env_name, env_params)
    m = spec.num_agents
    k = len(teams)
    mean = np.full((k, k), np.nan)
    ci = np.full((k, k), np.nan)
    for i, team in enumerate(teams):
        raw = selfplay_returns(team, env_name, episodes, _derived(seed, "xp-self", i),
                               env_params, greedy, runtimes)
        mean[i, i] = raw.mean()
        ci[i, i] = _ci(raw)
    if pairing == "all":
        pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    elif pairing == "linear":
        pairs = sorted({tuple(sorted((i, (i + 1) % k))) for i in range(k)})
    else:
        raise ConfigError(f"unknown pairing {pairing!r}")
    for i, j in pairs:
        raws = []
        for n in range(1, m):
            specs = []
            for e in range(episodes):
                rng = substream(seed, "xp", i, j, n, e)
                positions = set(int(p) for p in rng.choice(m, size=n, replace=False))
                slots = tuple(teams[i].members[p] if p in positions else teams[j].members[p]
                              for p in range(m))
                specs.append(TeamSpec(slots=slots, controlled_mask=(False,) * m,
                                      uncontrolled_id=f"{teams[i].id}+{teams[j].id}"))
            raws.append(_run_specs(env_name, env_params, specs,
                                   _derived(seed, "xp-env", i, j, n),
                                   _derived(seed, "xp-act", i, j, n), greedy, runtimes))
        raw = np.concatenate(raws)
        mean[i, j] = mean[j, i] = raw.mean()
        ci[i, j] = ci[j, i] = _ci(raw)
    return ScoreMatrix([t.id for t in teams], mean, ci)


def ood_eval(controlled: PolicyHandle, u_train: list[UncontrolledTeam],
             u_holdout: list[UncontrolledTeam], env_name: str, episodes: int,
             seed: int, env_params: dict | None = None, greedy: bool = False,
             runtimes=None, allow_overlap: bool = False):
    """Per-team M-N scores on the training set and the held-out set.

    Rows: (team_id, split, mean, ci95), train teams first.  Overlapping team
    ids or seed tags between the splits are a configuration error unless
    explicitly allowed (tests use the bypass).
    """
    if not allow_overlap:
        train_ids = {t.id for t in u_train}
        holdout_ids = {t.id for t in u_holdout}
        if train_ids & holdout_ids:
            raise ConfigError(f"train/holdout overlap: {sorted(train_ids & holdout_ids)}")
        train_seeds = {t.seed for t in u_train if t.seed is not None}
        holdout_seeds = {t.seed for t in u_holdout if t.seed is not None}
        if train_seeds & holdout_seeds:
            raise ConfigError(f"train/holdout seed overlap: {sorted(train_seeds & holdout_seeds)}")
    rows = []
    for split, teams in (("train", u_train), ("holdout", u_holdout)):
        for team in teams:
            sc = mn_score(controlled, [team], env_name, episodes,
                          _derived(seed, "ood", split, team.id), env_params,
                          greedy, runtimes)
            rows.append((team.id, split, sc.mean, sc.ci95))
    return rows


def varying_n_curve(controlled: PolicyHandle, uncontrolled: list[UncontrolledTeam],
                    env_name: str, episodes: int, seed: int,
                    env_params: dict | None = None, greedy: bool = False,
                    runtimes=None):
    """Mean return per N in {0..M}: N=0 is uncontrolled self-play (teams drawn
    per episode), N=M is controlled self-play."""
    spec = get_env_spec(env_name, env_params)
    m = spec.num_agents
    rows = []
    specs = []
    for e in range(episodes):
        rng = substream(seed, "vn0", e)
        team = uncontrolled[int(rng.integers(len(uncontrolled)))]
        specs.append(selfplay_spec(team))
    raw = _run_specs(env_name, env_params, specs, _derived(seed, "vn0-env"),
                     _derived(seed, "vn0-act"), greedy, runtimes)
    rows.append((0, float(raw.mean()), _ci(raw)))
    sc = mn_score(controlled, uncontrolled, env_name, episodes, _derived(seed, "vn"),
                  env_params, greedy, runtimes)
    for n in sorted(sc.returns_by_n):
        raw = sc.returns_by_n[n]
        rows.append((n, float(raw.mean()), _ci(raw)))
    raw = controlled_selfplay_returns(controlled, env_name, episodes,
                                      _derived(seed, "vnM"), env_params, greedy, runtimes)
    rows.append((m, float(raw.mean()), _ci(raw)))
    return rows


def within_episode_ed_diag(checkpoints, env_name: str,
                           uncontrolled: list[UncontrolledTeam], episodes: int,
                           seed: int, env_params: dict | None = None):
    """Within-episode decoder quality per checkpoint.

    For each checkpoint: roll episodes under uniform team sampling, run the
    encoder-decoder along every controlled agent's history, and report the
    per-timestep mean squared observation error (per element) and mean
    probability assigned to the modeled agents' taken actions, split by
    whether the modeled target is controlled or uncontrolled.  Team draws
    share one seed across checkpoints so curves are comparable.
    """
    from .poam.nets import NetworkRuntime, load_policy

    spec = get_env_spec(env_name, env_params)
    m = spec.num_agents
    rows = []
    for ckpt in checkpoints:
        store, nets, _ = load_policy(ckpt, expect_env=spec)
        if not nets.cfg.use_agent_modeling:
            raise ConfigError(f"{ckpt}: checkpoint has no agent-modeling module")
        handle = PolicyHandle(id="__diag__", kind="network",
                              env_fingerprint=spec.fingerprint())
        specs = []
        for e in range(episodes):
            rng = substream(seed, "eddiag-team", e)
            n = int(rng.integers(1, m))
            team = uncontrolled[int(rng.integers(len(uncontrolled)))]
            specs.append(place_team(handle, team, m, n, rng))
        env = make_vec_env(env_name, episodes, _derived(seed, "eddiag-env"), env_params)
        batch = collect_episodes(
            env, specs, _derived(seed, "eddiag-act"),
            runtime_resolver=_resolver(env, False, {"__diag__": NetworkRuntime(nets)}))

        label = Path(str(ckpt)).name
        rows.extend(_ed_diag_rows(nets, batch, label))
    return rows


def _ed_diag_rows(nets, batch, label):
    from . import kernels as K

    e, t_len, m, d = batch.obs.shape
    dtype = nets.store.dtype
    rows_e, rows_m = np.nonzero(batch.controlled_mask)
    obs = batch.obs[rows_e, :, rows_m].transpose(1, 0, 2).astype(dtype)
    prev = batch.prev_actions[rows_e, :, rows_m].transpose(1, 0)
    with no_grad():
        emb = nets.embed_sequence(obs, prev)
        obs_pred, act_logits = nets.decode(emb)
    r = len(rows_e)
    a = nets.cfg.num_actions
    t_obs = batch.teammate_obs[rows_e, :, rows_m].transpose(1, 0, 2)
    t_act = batch.teammate_actions[rows_e, :, rows_m].transpose(1, 0, 2)
    sq = (obs_pred.data.reshape(t_len, r, m - 1, d) -
          t_obs.reshape(t_len, r, m - 1, d)) ** 2
    mse = sq.mean(axis=3)  # [T, R, M-1] per-target mean over obs dims
    logp = K.log_softmax_forward(
        act_logits.data.reshape(t_len * r * (m - 1), a).astype(np.float64))
    taken = np.take_along_axis(logp, t_act.reshape(-1, 1), axis=1)
    prob = np.exp(taken).reshape(t_len, r, m - 1)

    # target j of row (e, i) is controlled iff mask[e, others(i)[j]]
    others = np.array([[j for j in range(m) if j != i] for i in range(m)])
    target_ctrl = batch.controlled_mask[rows_e[:, None], others[rows_m]]  # [R, M-1]
    target_ctrl = np.broadcast_to(target_ctrl, (t_len, r, m - 1))

    out = []
    for name, sel in (("controlled", target_ctrl),
                      ("uncontrolled", ~target_ctrl),
                      ("all", np.ones_like(target_ctrl))):
        for t in range(t_len):
            s = sel[t]
            if not s.any():
                out.append((label, t, name, float("nan"), float("nan")))
            else:
                out.append((label, t, name, float(mse[t][s].mean()),
                            float(prob[t][s].mean())))
    return out


# --- CSV writers -------------------------------------------------------------


def write_mn_csv(score: MnScore, path) -> None:
    rows = []
    for n in sorted(score.returns_by_n):
        for e, ret in enumerate(score.returns_by_n[n]):
            rows.append((n, e, float(ret)))
    write_csv(path, ["N", "episode", "return"], rows)


def write_xp_csv(matrix: ScoreMatrix, path) -> None:
    write_csv(path, ["row_team", "col_team", "mean", "ci95", "kind"], matrix.rows())


def write_ed_diag_csv(rows, path) -> None:
    write_csv(path, ["checkpoint", "t", "target", "obs_mse", "act_prob"], rows)


def write_ood_csv(rows, path) -> None:
    write_csv(path, ["team_id", "split", "mean", "ci95"], rows)


def write_varying_n_csv(rows, path) -> None:
    write_csv(path, ["N", "mean", "ci95"], rows)
