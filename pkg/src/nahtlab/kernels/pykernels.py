"""Pure-numpy reference implementations of the hot kernels.

These are the fallback backend and the semantic reference for the compiled
extension; the two backends agree to float tolerance (see tests and the
kernel benchmark) but are not required to agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    # piecewise form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def layernorm_forward(x, gain, bias, eps):
    """Normalize rows of x to zero mean / unit variance, then apply affine.

    Returns (y, xhat, rstd); xhat and rstd are cached for the backward pass.
    """
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    y = xhat * gain + bias
    return y, xhat, rstd.reshape(x.shape[:-1])


def layernorm_backward(dy, xhat, rstd, gain):
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[..., None]
    return dx, dgain, dbias


def gru_gates_forward(gx, hu_zr, h):
    """Update/reset gates from the stacked input projection gx = [z | r | c].

    z, r = sigmoid(gx[:, :2H] + hu_zr); rh = r * h.
    """
    hdim = h.shape[-1]
    z = _sigmoid(gx[:, :hdim] + hu_zr[:, :hdim])
    r = _sigmoid(gx[:, hdim : 2 * hdim] + hu_zr[:, hdim:])
    rh = r * h
    return z, r, rh


def gru_out_forward(gx, cu, z, h):
    """Candidate and blend: c = tanh(gx[:, 2H:] + cu); h_new = (1-z)*c + z*h."""
    hdim = h.shape[-1]
    c = np.tanh(gx[:, 2 * hdim :] + cu)
    h_new = (1.0 - z) * c + z * h
    return c, h_new


def gru_out_backward(dh_new, z, c, h):
    dac = dh_new * (1.0 - z) * (1.0 - c * c)
    daz = dh_new * (h - c) * z * (1.0 - z)
    dh_partial = dh_new * z
    return dac, daz, dh_partial


def gru_gates_backward(drh, r, h):
    dar = drh * h * r * (1.0 - r)
    dh_add = drh * r
    return dar, dh_add


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """Bias-corrected Adam step, in place on param/m/v. t is the step index (>= 1)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)


def log_softmax_forward(x):
    mx = x.max(axis=-1, keepdims=True)
    shifted = x - mx
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - lse


def log_softmax_backward(dy, y):
    return dy - np.exp(y) * dy.sum(axis=-1, keepdims=True)
