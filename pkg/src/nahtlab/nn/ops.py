"""The fixed op vocabulary of the tape.

Elementwise-heavy ops (layer norm, GRU gate stages, log-softmax) route
through the kernel backend; matmuls stay on BLAS via numpy.
"""

from __future__ import annotations

import numpy as np

from .. import kernels as K
from .tensor import Tensor, accumulate, as_tensor, make_node

LAYERNORM_EPS = 1e-5


def _unbroadcast(g, shape):
    """Reduce gradient g to `shape` after numpy broadcasting in the forward."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def bwd(g):
        accumulate(a, g @ b.data.T)
        accumulate(b, a.data.T @ g)

    return make_node(out, (a, b), bwd)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        accumulate(a, _unbroadcast(g, a.data.shape))
        accumulate(b, _unbroadcast(g, b.data.shape))

    return make_node(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def bwd(g):
        accumulate(a, _unbroadcast(g, a.data.shape))
        accumulate(b, _unbroadcast(-g, b.data.shape))

    return make_node(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return make_node(out, (a, b), bwd)


def neg(x: Tensor) -> Tensor:
    def bwd(g):
        accumulate(x, -g)

    return make_node(-x.data, (x,), bwd)


def scale(x: Tensor, c: float) -> Tensor:
    def bwd(g):
        accumulate(x, g * c)

    return make_node(x.data * c, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def bwd(g):
        accumulate(x, g * (x.data > 0))

    return make_node(out, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bwd(g):
        accumulate(x, g * (1.0 - out * out))

    return make_node(out, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        accumulate(x, g * out * (1.0 - out))

    return make_node(out, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bwd(g):
        accumulate(x, g * out)

    return make_node(out, (x,), bwd)


def square(x: Tensor) -> Tensor:
    def bwd(g):
        accumulate(x, g * 2.0 * x.data)

    return make_node(x.data * x.data, (x,), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    out = np.minimum(a.data, b.data)
    take_a = a.data <= b.data  # ties route to the first argument

    def bwd(g):
        accumulate(a, g * take_a)
        accumulate(b, g * ~take_a)

    return make_node(out, (a, b), bwd)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    out = np.maximum(a.data, b.data)
    take_a = a.data >= b.data  # ties route to the first argument

    def bwd(g):
        accumulate(a, g * take_a)
        accumulate(b, g * ~take_a)

    return make_node(out, (a, b), bwd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(x.data, lo, hi)
    inside = (x.data > lo) & (x.data < hi)

    def bwd(g):
        accumulate(x, g * inside)

    return make_node(out, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYERNORM_EPS) -> Tensor:
    out, xhat, rstd = K.layernorm_forward(x.data, gain.data, bias.data, eps)

    def bwd(g):
        dx, dgain, dbias = K.layernorm_backward(g, xhat, rstd, gain.data)
        accumulate(x, dx)
        accumulate(gain, dgain)
        accumulate(bias, dbias)

    return make_node(out, (x, gain, bias), bwd)


def gru_cell(gx: Tensor, h: Tensor, u_zr: Tensor, u_c: Tensor) -> Tensor:
    """One GRU step.

    gx holds the input projections plus biases, gate order (z, r, c):
        z = sigmoid(gx_z + h @ Uz)
        r = sigmoid(gx_r + h @ Ur)
        c = tanh(gx_c + (r * h) @ Uc)
        h' = (1 - z) * c + z * h
    """
    hu_zr = h.data @ u_zr.data
    z, r, rh = K.gru_gates_forward(gx.data, hu_zr, h.data)
    c, h_new = K.gru_out_forward(gx.data, rh @ u_c.data, z, h.data)

    def bwd(g):
        dac, daz, dh = K.gru_out_backward(g, z, c, h.data)
        drh = dac @ u_c.data.T
        accumulate(u_c, rh.T @ dac)
        dar, dh_add = K.gru_gates_backward(drh, r, h.data)
        dh += dh_add
        da_zr = np.concatenate([daz, dar], axis=1)
        dh += da_zr @ u_zr.data.T
        accumulate(u_zr, h.data.T @ da_zr)
        accumulate(h, dh)
        accumulate(gx, np.concatenate([da_zr, dac], axis=1))

    return make_node(h_new, (gx, h, u_zr, u_c), bwd)


def log_softmax(x: Tensor) -> Tensor:
    out = K.log_softmax_forward(x.data)

    def bwd(g):
        accumulate(x, K.log_softmax_backward(g, out))

    return make_node(out, (x,), bwd)


def gather_rows(x: Tensor, idx) -> Tensor:
    """out[n] = x[n, idx[n]] for a 2D tensor."""
    n = x.data.shape[0]
    rows = np.arange(n)
    out = x.data[rows, idx]

    def bwd(g):
        dx = np.zeros_like(x.data)
        dx[rows, idx] = g
        accumulate(x, dx)

    return make_node(out, (x,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        sl = [slice(None)] * g.ndim
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl[axis] = slice(lo, hi)
            accumulate(t, g[tuple(sl)])

    return make_node(out, tuple(tensors), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.data.shape

    def bwd(g):
        accumulate(x, g.reshape(orig))

    return make_node(x.data.reshape(shape), (x,), bwd)


def timestep(x: Tensor, t: int) -> Tensor:
    """Slice step t out of a [T, R, D] tensor."""

    def bwd(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[t] += g

    return make_node(x.data[t], (x,), bwd)


def sum_last(x: Tensor) -> Tensor:
    out = x.data.sum(axis=-1)

    def bwd(g):
        accumulate(x, np.broadcast_to(g[..., None], x.data.shape))

    return make_node(out, (x,), bwd)


def total_sum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def bwd(g):
        accumulate(x, np.broadcast_to(g, x.data.shape))

    return make_node(out, (x,), bwd)


def total_mean(x: Tensor) -> Tensor:
    return scale(total_sum(x), 1.0 / x.data.size)


def masked_mean(x: Tensor, weights) -> Tensor:
    """Mean of x over entries with positive weight; weights are constant."""
    w = np.asarray(weights, dtype=x.data.dtype)
    total = w.sum()
    if total <= 0:
        raise ValueError("masked_mean over an empty mask")
    out = np.asarray((x.data * w).sum() / total)

    def bwd(g):
        accumulate(x, g * w / total)

    return make_node(out, (x,), bwd)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data)
