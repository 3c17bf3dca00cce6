"""Network building blocks: dense / layer-norm / ReLU stacks and a GRU.

Initialization conventions (defaults, not tuned per task): orthogonal
weights with gain sqrt(2) before ReLU, gain 1 elsewhere, 0.01 on policy
output heads; biases zero.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from . import ops
from .params import ParamStore, orthogonal
from .tensor import Tensor

RELU_GAIN = math.sqrt(2.0)


class Dense:
    def __init__(self, store: ParamStore, prefix: str, din: int, dout: int,
                 rng: np.random.Generator, w_gain: float = 1.0):
        self.store = store
        self.prefix = prefix
        self.din = din
        self.dout = dout
        store.add(prefix + "/w", orthogonal(rng, din, dout, w_gain))
        store.add(prefix + "/b", np.zeros(dout))

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.din:
            raise ConfigError(
                f"input dim {x.data.shape[-1]} does not match {self.prefix + '/w'!r} "
                f"expecting {self.din}"
            )
        return ops.add(ops.matmul(x, self.store.leaf(self.prefix + "/w")),
                       self.store.leaf(self.prefix + "/b"))


class LayerNorm:
    def __init__(self, store: ParamStore, prefix: str, dim: int):
        self.store = store
        self.prefix = prefix
        store.add(prefix + "/g", np.ones(dim))
        store.add(prefix + "/b", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.store.leaf(self.prefix + "/g"),
                              self.store.leaf(self.prefix + "/b"))


class MLP:
    """dense -> layer-norm -> ReLU blocks, followed by a linear head."""

    def __init__(self, store: ParamStore, prefix: str, din: int, hidden, dout: int,
                 rng: np.random.Generator, head_gain: float = 1.0, layernorm: bool = True):
        dims = [din] + list(hidden)
        self.blocks = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            dense = Dense(store, f"{prefix}/fc{i}", a, b, rng, w_gain=RELU_GAIN)
            ln = LayerNorm(store, f"{prefix}/fc{i}/ln", b) if layernorm else None
            self.blocks.append((dense, ln))
        self.head = Dense(store, f"{prefix}/out", dims[-1], dout, rng, w_gain=head_gain)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.trunk(x)
        return self.head(h)

    def trunk(self, x: Tensor) -> Tensor:
        h = x
        for dense, ln in self.blocks:
            h = dense(h)
            if ln is not None:
                h = ln(h)
            h = ops.relu(h)
        return h


class GRU:
    """Single GRU layer with the update convention h' = (1-z)*c + z*h.

    Gate order in the stacked input projection is (z, r, c); the candidate
    uses the reset-before-projection form c = tanh(Wx + Uc (r*h) + b).
    """

    def __init__(self, store: ParamStore, prefix: str, din: int, hidden: int,
                 rng: np.random.Generator):
        self.store = store
        self.prefix = prefix
        self.din = din
        self.hidden = hidden
        w = np.concatenate([orthogonal(rng, din, hidden) for _ in range(3)], axis=1)
        u_zr = np.concatenate([orthogonal(rng, hidden, hidden) for _ in range(2)], axis=1)
        store.add(prefix + "/w_ih", w)
        store.add(prefix + "/b", np.zeros(3 * hidden))
        store.add(prefix + "/u_zr", u_zr)
        store.add(prefix + "/u_c", orthogonal(rng, hidden, hidden))

    def initial_state(self, rows: int, dtype=None) -> Tensor:
        return Tensor(np.zeros((rows, self.hidden), dtype=dtype or self.store.dtype))

    def _leafs(self):
        s, p = self.store, self.prefix
        return s.leaf(p + "/w_ih"), s.leaf(p + "/b"), s.leaf(p + "/u_zr"), s.leaf(p + "/u_c")

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        if x.data.shape[-1] != self.din:
            raise ConfigError(
                f"input dim {x.data.shape[-1]} does not match {self.prefix + '/w_ih'!r} "
                f"expecting {self.din}"
            )
        w, b, u_zr, u_c = self._leafs()
        gx = ops.add(ops.matmul(x, w), b)
        return ops.gru_cell(gx, h, u_zr, u_c)

    def sequence(self, xs: Tensor, h0: Tensor | None = None) -> list[Tensor]:
        """Unroll over a [T, R, din] tensor; returns the T hidden states."""
        t_len, rows, _ = xs.data.shape
        w, b, u_zr, u_c = self._leafs()
        flat = ops.reshape(xs, (t_len * rows, self.din))
        gx_all = ops.reshape(ops.add(ops.matmul(flat, w), b), (t_len, rows, 3 * self.hidden))
        h = h0 if h0 is not None else self.initial_state(rows, dtype=xs.data.dtype)
        states = []
        for t in range(t_len):
            h = ops.gru_cell(ops.timestep(gx_all, t), h, u_zr, u_c)
            states.append(h)
        return states


def categorical_log_prob(logits, actions):
    """Log-probability of `actions` under softmax(logits).

    Accepts a 1D logits Tensor with a scalar action, or [N, A] with [N]
    actions.  Differentiable w.r.t. logits; shift-invariant via log-sum-exp.
    """
    single = logits.data.ndim == 1
    if single:
        logits = ops.reshape(logits, (1, logits.data.shape[0]))
        actions = np.asarray([actions])
    else:
        actions = np.asarray(actions)
    num_actions = logits.data.shape[-1]
    if actions.min() < 0 or actions.max() >= num_actions:
        raise ValueError(f"action index out of range [0, {num_actions})")
    lp = ops.gather_rows(ops.log_softmax(logits), actions)
    return ops.reshape(lp, ()) if single else lp


def categorical_entropy(logits: Tensor) -> Tensor:
    """Per-row entropy of softmax(logits) for a [N, A] tensor."""
    lp = ops.log_softmax(logits)
    return ops.neg(ops.sum_last(ops.mul(ops.exp(lp), lp)))


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    from .. import kernels as K

    return np.exp(K.log_softmax_forward(logits))


def sample_categorical(logits: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, one uniform per row; deterministic given inputs."""
    probs = softmax_probs(logits)
    cdf = np.cumsum(probs, axis=-1)
    acts = (cdf < uniforms[..., None]).sum(axis=-1)
    return np.minimum(acts, logits.shape[-1] - 1)
