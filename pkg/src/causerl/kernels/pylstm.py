"""Pure-numpy LSTM sequence kernels (fallback backend).

A single call runs one direction of an LSTM over a whole token sequence and
returns everything the backward pass needs. The compiled backend in
``_lstm.pyx`` implements the identical contract; ``causerl.kernels`` picks
one at import time.

Gate layout along the 4h axis is ``[input, forget, cell, output]``.
"""

import numpy as np


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def lstm_forward(x, wx, wh, b, reverse=False):
    """Run an LSTM over ``x`` (L, d) in one direction.

    Returns ``(hs, gates, cs)`` where ``hs`` (L, h) are the hidden states
    aligned to input positions, ``gates`` (L, 4h) the post-activation gate
    values and ``cs`` (L, h) the cell states; ``gates`` and ``cs`` are the
    cache consumed by :func:`lstm_backward`.
    """
    L = x.shape[0]
    h = wh.shape[0]
    hs = np.zeros((L, h))
    cs = np.zeros((L, h))
    gates = np.zeros((L, 4 * h))
    pre_x = x @ wx + b  # hoist the input projection out of the loop

    order = range(L - 1, -1, -1) if reverse else range(L)
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for t in order:
        a = pre_x[t] + h_prev @ wh
        i = _sigmoid(a[:h])
        f = _sigmoid(a[h:2 * h])
        g = np.tanh(a[2 * h:3 * h])
        o = _sigmoid(a[3 * h:])
        c = f * c_prev + i * g
        h_cur = o * np.tanh(c)
        gates[t, :h] = i
        gates[t, h:2 * h] = f
        gates[t, 2 * h:3 * h] = g
        gates[t, 3 * h:] = o
        cs[t] = c
        hs[t] = h_cur
        h_prev = h_cur
        c_prev = c
    return hs, gates, cs


def lstm_backward(dhs, x, wx, wh, hs, gates, cs, reverse=False):
    """Backpropagate through :func:`lstm_forward`.

    ``dhs`` (L, h) is the gradient w.r.t. the per-position hidden states.
    Returns ``(dx, dwx, dwh, db)``.
    """
    L, d = x.shape
    h = wh.shape[0]
    dx = np.zeros((L, d))
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * h)

    steps = list(range(L - 1, -1, -1) if reverse else range(L))
    dh_rec = np.zeros(h)
    dc_rec = np.zeros(h)
    for s in range(L - 1, -1, -1):  # reverse of processing order
        t = steps[s]
        if s > 0:
            t_prev = steps[s - 1]
            h_prev = hs[t_prev]
            c_prev = cs[t_prev]
        else:
            h_prev = np.zeros(h)
            c_prev = np.zeros(h)
        i = gates[t, :h]
        f = gates[t, h:2 * h]
        g = gates[t, 2 * h:3 * h]
        o = gates[t, 3 * h:]
        tc = np.tanh(cs[t])

        dh = dhs[t] + dh_rec
        dc = dc_rec + dh * o * (1.0 - tc * tc)
        da = np.empty(4 * h)
        da[:h] = dc * g * i * (1.0 - i)
        da[h:2 * h] = dc * c_prev * f * (1.0 - f)
        da[2 * h:3 * h] = dc * i * (1.0 - g * g)
        da[3 * h:] = dh * tc * o * (1.0 - o)

        dx[t] = da @ wx.T
        dwx += np.outer(x[t], da)
        dwh += np.outer(h_prev, da)
        db += da
        dh_rec = da @ wh.T
        dc_rec = dc * f
    return dx, dwx, dwh, db
