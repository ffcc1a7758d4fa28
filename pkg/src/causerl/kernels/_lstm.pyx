# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM sequence kernels.

Same contract as ``pylstm``: gate layout [input, forget, cell, output],
hidden states aligned to input positions for both directions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double a) nogil:
    if a >= 0.0:
        return 1.0 / (1.0 + exp(-a))
    cdef double e = exp(a)
    return e / (1.0 + e)


def lstm_forward(double[:, ::1] x, double[:, ::1] wx, double[:, ::1] wh,
                 double[::1] b, bint reverse=False):
    cdef Py_ssize_t L = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t h = wh.shape[0]
    cdef cnp.ndarray[double, ndim=2] hs_arr = np.zeros((L, h))
    cdef cnp.ndarray[double, ndim=2] cs_arr = np.zeros((L, h))
    cdef cnp.ndarray[double, ndim=2] gates_arr = np.zeros((L, 4 * h))
    cdef double[:, ::1] hs = hs_arr
    cdef double[:, ::1] cs = cs_arr
    cdef double[:, ::1] gates = gates_arr
    cdef double[::1] a = np.zeros(4 * h)
    cdef double[::1] h_prev = np.zeros(h)
    cdef double[::1] c_prev = np.zeros(h)

    cdef Py_ssize_t s, t, j, k
    cdef double acc, i_g, f_g, g_g, o_g, c_val
    for s in range(L):
        t = L - 1 - s if reverse else s
        for j in range(4 * h):
            acc = b[j]
            for k in range(d):
                acc += x[t, k] * wx[k, j]
            for k in range(h):
                acc += h_prev[k] * wh[k, j]
            a[j] = acc
        for j in range(h):
            i_g = _sig(a[j])
            f_g = _sig(a[h + j])
            g_g = tanh(a[2 * h + j])
            o_g = _sig(a[3 * h + j])
            c_val = f_g * c_prev[j] + i_g * g_g
            gates[t, j] = i_g
            gates[t, h + j] = f_g
            gates[t, 2 * h + j] = g_g
            gates[t, 3 * h + j] = o_g
            cs[t, j] = c_val
            hs[t, j] = o_g * tanh(c_val)
        for j in range(h):
            h_prev[j] = hs[t, j]
            c_prev[j] = cs[t, j]
    return hs_arr, gates_arr, cs_arr


def lstm_backward(double[:, ::1] dhs, double[:, ::1] x, double[:, ::1] wx,
                  double[:, ::1] wh, double[:, ::1] hs, double[:, ::1] gates,
                  double[:, ::1] cs, bint reverse=False):
    cdef Py_ssize_t L = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t h = wh.shape[0]
    cdef cnp.ndarray[double, ndim=2] dx_arr = np.zeros((L, d))
    cdef cnp.ndarray[double, ndim=2] dwx_arr = np.zeros((d, 4 * h))
    cdef cnp.ndarray[double, ndim=2] dwh_arr = np.zeros((h, 4 * h))
    cdef cnp.ndarray[double, ndim=1] db_arr = np.zeros(4 * h)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dwx = dwx_arr
    cdef double[:, ::1] dwh = dwh_arr
    cdef double[::1] db = db_arr
    cdef double[::1] dh_rec = np.zeros(h)
    cdef double[::1] dc_rec = np.zeros(h)
    cdef double[::1] da = np.zeros(4 * h)

    cdef Py_ssize_t s, t, t_prev, j, k
    cdef double i_g, f_g, g_g, o_g, tc, dh, dc, acc, hp, cp
    for s in range(L - 1, -1, -1):
        t = L - 1 - s if reverse else s
        t_prev = (L - s if reverse else s - 1)  # position of previous step
        for j in range(h):
            i_g = gates[t, j]
            f_g = gates[t, h + j]
            g_g = gates[t, 2 * h + j]
            o_g = gates[t, 3 * h + j]
            tc = tanh(cs[t, j])
            cp = cs[t_prev, j] if s > 0 else 0.0
            dh = dhs[t, j] + dh_rec[j]
            dc = dc_rec[j] + dh * o_g * (1.0 - tc * tc)
            da[j] = dc * g_g * i_g * (1.0 - i_g)
            da[h + j] = dc * cp * f_g * (1.0 - f_g)
            da[2 * h + j] = dc * i_g * (1.0 - g_g * g_g)
            da[3 * h + j] = dh * tc * o_g * (1.0 - o_g)
            dc_rec[j] = dc * f_g
        for k in range(d):
            acc = 0.0
            for j in range(4 * h):
                acc += da[j] * wx[k, j]
            dx[t, k] = acc
        for j in range(4 * h):
            for k in range(d):
                dwx[k, j] += x[t, k] * da[j]
            db[j] += da[j]
        for k in range(h):
            hp = hs[t_prev, k] if s > 0 else 0.0
            acc = 0.0
            for j in range(4 * h):
                dwh[k, j] += hp * da[j]
                acc += da[j] * wh[k, j]
            dh_rec[k] = acc
    return dx_arr, dwx_arr, dwh_arr, db_arr
