"""The three training losses and the TD(lambda) targets.

Conventions shared by all losses: data arrives time-major as [T, R, ...]
arrays where R indexes (episode, slot) rows; losses average over agent-steps.
Targets, advantages, and old log-probabilities are plain arrays (constants on
the tape), so gradients reach exactly the parameter group each loss owns.
"""

from __future__ import annotations

import numpy as np

from ..nn import categorical_entropy, categorical_log_prob, ops
from ..nn.tensor import Tensor


def td_lambda_targets(values: np.ndarray, rewards: np.ndarray, dones: np.ndarray,
                      gamma: float, lam: float) -> np.ndarray:
    """Recursive lambda-return per row.

    values: [R, T+1] with the one-past-end bootstrap in the last column
    (zeroed at terminals by the (1 - done) factor); rewards/dones: [R, T].
    targets[t] = r[t] + gamma * (1-done[t]) * ((1-lam) * V[t+1] + lam * targets[t+1]).
    """
    rows, t_len = rewards.shape
    targets = np.empty((rows, t_len), dtype=values.dtype)
    nxt = values[:, t_len]
    running = nxt
    for t in range(t_len - 1, -1, -1):
        cont = 1.0 - dones[:, t]
        running = rewards[:, t] + gamma * cont * ((1.0 - lam) * values[:, t + 1] + lam * running)
        targets[:, t] = running
    return targets


def ed_loss(nets, obs: np.ndarray, prev_actions: np.ndarray,
            target_obs: np.ndarray, target_actions: np.ndarray):
    """Prediction loss of the encoder-decoder on [T, R, ...] controlled rows.

    Per agent-step: squared error summed over the concatenated teammate
    observation vector, plus the summed negative log-likelihood of the
    teammates' taken actions; averaged over the T*R agent-steps.  Returns
    (loss, obs_term, nll_term) with the terms as floats for metrics.
    """
    t_len, rows = obs.shape[:2]
    n_steps = t_len * rows
    m1 = target_actions.shape[-1]
    num_actions = nets.cfg.num_actions

    emb = nets.embed_sequence(obs, prev_actions)
    obs_pred, act_logits = nets.decode(emb)

    flat_t_obs = target_obs.reshape(n_steps, -1)
    obs_term = ops.total_mean(ops.sum_last(ops.square(ops.sub(obs_pred, Tensor(flat_t_obs)))))

    logits = ops.reshape(act_logits, (n_steps * m1, num_actions))
    taken = target_actions.reshape(-1)
    logp = categorical_log_prob(logits, taken)
    nll_term = ops.scale(ops.total_sum(logp), -1.0 / n_steps)

    loss = ops.add(obs_term, nll_term)
    return loss, float(obs_term.data), float(nll_term.data)


def value_loss(values: Tensor, targets: np.ndarray, weights: np.ndarray,
               old_values: np.ndarray | None = None, clip: float | None = None) -> Tensor:
    """Mean over weighted agent-steps of 0.5 * (V - target)^2.

    With clip set (off by default per the tuned configuration), the clipped
    form max(err^2, clipped_err^2) / 2 is used against old_values.
    """
    err = ops.sub(values, Tensor(targets))
    if clip is None:
        return ops.scale(ops.masked_mean(ops.square(err), weights), 0.5)
    assert old_values is not None
    clipped = ops.add(ops.clip(ops.sub(values, Tensor(old_values)), -clip, clip),
                      Tensor(old_values))
    err_clip = ops.sub(clipped, Tensor(targets))
    worst = ops.maximum(ops.square(err), ops.square(err_clip))
    return ops.scale(ops.masked_mean(worst, weights), 0.5)


def ppo_actor_loss(logits: Tensor, actions: np.ndarray, old_logp: np.ndarray,
                   advantages: np.ndarray, weights: np.ndarray,
                   clip: float, entropy_coef: float):
    """Clipped-surrogate policy loss with an entropy bonus.

    loss = -mean[min(rho * A, clip(rho, 1-c, 1+c) * A)] - coef * mean[H(pi)]
    where rho = exp(logp_new - logp_old).  Returns (loss, mean_entropy,
    mean_ratio) with the scalars as floats for metrics.
    """
    logp_new = categorical_log_prob(logits, actions)
    ratio = ops.exp(ops.sub(logp_new, Tensor(old_logp)))
    adv = Tensor(advantages)
    surrogate = ops.minimum(ops.mul(ratio, adv),
                            ops.mul(ops.clip(ratio, 1.0 - clip, 1.0 + clip), adv))
    policy_term = ops.neg(ops.masked_mean(surrogate, weights))
    entropy = ops.masked_mean(categorical_entropy(logits), weights)
    loss = ops.sub(policy_term, ops.scale(entropy, entropy_coef))
    mean_ratio = float(np.average(ratio.data, weights=weights))
    return loss, float(entropy.data), mean_ratio


def normalize_advantages(adv: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Standardize advantages over the masked entries (mean 0, std 1)."""
    sel = adv[mask]
    centered = adv - sel.mean()
    return centered / (sel.std() + 1e-8)
