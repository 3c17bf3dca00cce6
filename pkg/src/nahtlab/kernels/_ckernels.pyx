# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused single-pass versions of the hot kernels.

Semantics mirror pykernels exactly (same signatures, same math); loops are
fused to avoid numpy temporaries in the GRU / layer-norm / Adam inner loops.
"""

import numpy as np

cimport cython
from libc.math cimport exp, log, sqrt, tanh

ctypedef fused real:
    float
    double


cdef inline real _sigmoid(real a) noexcept nogil:
    if a >= 0:
        return <real>(1.0 / (1.0 + exp(-a)))
    cdef real e = <real>exp(a)
    return <real>(e / (1.0 + e))


def layernorm_forward(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    cdef Py_ssize_t b = x.shape[0], d = x.shape[1], i, j
    y_arr = np.empty((b, d), dtype=np.asarray(x).dtype)
    xhat_arr = np.empty_like(y_arr)
    rstd_arr = np.empty(b, dtype=np.asarray(x).dtype)
    cdef real[:, ::1] y = y_arr
    cdef real[:, ::1] xhat = xhat_arr
    cdef real[::1] rstd = rstd_arr
    cdef double mu, var, diff, rs
    with nogil:
        for i in range(b):
            mu = 0.0
            for j in range(d):
                mu += x[i, j]
            mu /= d
            var = 0.0
            for j in range(d):
                diff = x[i, j] - mu
                var += diff * diff
            var /= d
            rs = 1.0 / sqrt(var + eps)
            rstd[i] = <real>rs
            for j in range(d):
                xhat[i, j] = <real>((x[i, j] - mu) * rs)
                y[i, j] = xhat[i, j] * gain[j] + bias[j]
    return y_arr, xhat_arr, rstd_arr


def layernorm_backward(real[:, ::1] dy, real[:, ::1] xhat, real[::1] rstd,
                       real[::1] gain):
    cdef Py_ssize_t b = dy.shape[0], d = dy.shape[1], i, j
    dx_arr = np.empty((b, d), dtype=np.asarray(dy).dtype)
    dgain_arr = np.zeros(d, dtype=np.asarray(dy).dtype)
    dbias_arr = np.zeros(d, dtype=np.asarray(dy).dtype)
    cdef real[:, ::1] dx = dx_arr
    cdef real[::1] dgain = dgain_arr
    cdef real[::1] dbias = dbias_arr
    cdef double m1, m2, dxh
    with nogil:
        for i in range(b):
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                dxh = dy[i, j] * gain[j]
                m1 += dxh
                m2 += dxh * xhat[i, j]
            m1 /= d
            m2 /= d
            for j in range(d):
                dxh = dy[i, j] * gain[j]
                dx[i, j] = <real>((dxh - m1 - xhat[i, j] * m2) * rstd[i])
                dgain[j] += dy[i, j] * xhat[i, j]
                dbias[j] += dy[i, j]
    return dx_arr, dgain_arr, dbias_arr


def gru_gates_forward(real[:, ::1] gx, real[:, ::1] hu_zr, real[:, ::1] h):
    cdef Py_ssize_t b = h.shape[0], hd = h.shape[1], i, j
    z_arr = np.empty((b, hd), dtype=np.asarray(h).dtype)
    r_arr = np.empty_like(z_arr)
    rh_arr = np.empty_like(z_arr)
    cdef real[:, ::1] z = z_arr
    cdef real[:, ::1] r = r_arr
    cdef real[:, ::1] rh = rh_arr
    with nogil:
        for i in range(b):
            for j in range(hd):
                z[i, j] = _sigmoid(gx[i, j] + hu_zr[i, j])
                r[i, j] = _sigmoid(gx[i, hd + j] + hu_zr[i, hd + j])
                rh[i, j] = r[i, j] * h[i, j]
    return z_arr, r_arr, rh_arr


def gru_out_forward(real[:, ::1] gx, real[:, ::1] cu, real[:, ::1] z,
                    real[:, ::1] h):
    cdef Py_ssize_t b = h.shape[0], hd = h.shape[1], i, j
    c_arr = np.empty((b, hd), dtype=np.asarray(h).dtype)
    hn_arr = np.empty_like(c_arr)
    cdef real[:, ::1] c = c_arr
    cdef real[:, ::1] hn = hn_arr
    with nogil:
        for i in range(b):
            for j in range(hd):
                c[i, j] = <real>tanh(gx[i, 2 * hd + j] + cu[i, j])
                hn[i, j] = (1.0 - z[i, j]) * c[i, j] + z[i, j] * h[i, j]
    return c_arr, hn_arr


def gru_out_backward(real[:, ::1] dh_new, real[:, ::1] z, real[:, ::1] c,
                     real[:, ::1] h):
    cdef Py_ssize_t b = h.shape[0], hd = h.shape[1], i, j
    dac_arr = np.empty((b, hd), dtype=np.asarray(h).dtype)
    daz_arr = np.empty_like(dac_arr)
    dhp_arr = np.empty_like(dac_arr)
    cdef real[:, ::1] dac = dac_arr
    cdef real[:, ::1] daz = daz_arr
    cdef real[:, ::1] dhp = dhp_arr
    with nogil:
        for i in range(b):
            for j in range(hd):
                dac[i, j] = dh_new[i, j] * (1.0 - z[i, j]) * (1.0 - c[i, j] * c[i, j])
                daz[i, j] = dh_new[i, j] * (h[i, j] - c[i, j]) * z[i, j] * (1.0 - z[i, j])
                dhp[i, j] = dh_new[i, j] * z[i, j]
    return dac_arr, daz_arr, dhp_arr


def gru_gates_backward(real[:, ::1] drh, real[:, ::1] r, real[:, ::1] h):
    cdef Py_ssize_t b = h.shape[0], hd = h.shape[1], i, j
    dar_arr = np.empty((b, hd), dtype=np.asarray(h).dtype)
    dha_arr = np.empty_like(dar_arr)
    cdef real[:, ::1] dar = dar_arr
    cdef real[:, ::1] dha = dha_arr
    with nogil:
        for i in range(b):
            for j in range(hd):
                dar[i, j] = drh[i, j] * h[i, j] * r[i, j] * (1.0 - r[i, j])
                dha[i, j] = drh[i, j] * r[i, j]
    return dar_arr, dha_arr


def adam_update(param, grad, m, v, long t, double lr, double beta1,
                double beta2, double eps):
    _adam_flat(param.reshape(-1), grad.reshape(-1), m.reshape(-1), v.reshape(-1),
               t, lr, beta1, beta2, eps)


def _adam_flat(real[::1] p, real[::1] g, real[::1] m, real[::1] v, long t,
               double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0], i
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double mhat, vhat
    with nogil:
        for i in range(n):
            m[i] = <real>(beta1 * m[i] + (1.0 - beta1) * g[i])
            v[i] = <real>(beta2 * v[i] + (1.0 - beta2) * g[i] * g[i])
            mhat = m[i] / c1
            vhat = v[i] / c2
            p[i] -= <real>(lr * mhat / (sqrt(vhat) + eps))


def log_softmax_forward(real[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], a = x.shape[1], i, j
    y_arr = np.empty((n, a), dtype=np.asarray(x).dtype)
    cdef real[:, ::1] y = y_arr
    cdef double mx, s
    with nogil:
        for i in range(n):
            mx = x[i, 0]
            for j in range(1, a):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(a):
                s += exp(x[i, j] - mx)
            s = log(s)
            for j in range(a):
                y[i, j] = <real>(x[i, j] - mx - s)
    return y_arr


def log_softmax_backward(real[:, ::1] dy, real[:, ::1] y):
    cdef Py_ssize_t n = y.shape[0], a = y.shape[1], i, j
    dx_arr = np.empty((n, a), dtype=np.asarray(y).dtype)
    cdef real[:, ::1] dx = dx_arr
    cdef double s
    with nogil:
        for i in range(n):
            s = 0.0
            for j in range(a):
                s += dy[i, j]
            for j in range(a):
                dx[i, j] = <real>(dy[i, j] - exp(y[i, j]) * s)
    return dx_arr
