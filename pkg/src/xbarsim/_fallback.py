"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""

import math

import numpy as np


def _rate(v, v_on, v_off, k_on, k_off, alpha_on, alpha_off):
    if v > v_off:
        return k_off * (v / v_off - 1.0) ** alpha_off
    if v < v_on:
        return k_on * (v / v_on - 1.0) ** alpha_on
    return 0.0


def vteam_integrate(t, v, w0, r_on, r_off, v_on, v_off, k_on, k_off,
                    alpha_on, alpha_off, w_min, w_max, dt):
    t = [float(a) for a in t]
    v = [float(a) for a in v]
    n = len(t)
    i_out = np.empty(n)
    w_out = np.empty(n)
    w = float(w0)
    width = w_max - w_min
    for k in range(n):
        w_out[k] = w
        x = (w - w_min) / width
        i_out[k] = v[k] / (r_on * x + r_off * (1.0 - x))
        if k + 1 == n:
            break
        span = t[k + 1] - t[k]
        m = max(1, int(math.ceil(span / dt - 1e-9)))
        h = span / m
        dv = (v[k + 1] - v[k]) / m
        vk = v[k]
        for s in range(m):
            w += h * _rate(vk + dv * s, v_on, v_off, k_on, k_off, alpha_on, alpha_off)
            if w < w_min:
                w = w_min
            elif w > w_max:
                w = w_max
    return i_out, w_out


def im2col(x, kernel, stride, padding):
    n_img, chans, height, width = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    # (n, c, oh, ow, ky, kx) -> (n, oh, ow, c, ky, kx)
    win = win.transpose(0, 2, 3, 1, 4, 5)
    return np.ascontiguousarray(win.reshape(-1, chans * kernel * kernel), dtype=np.float64)


def adc_quantize(current, i_max, bits):
    step = 2.0 * i_max / (2.0 ** bits - 1.0)
    c = np.clip(current, -i_max, i_max)
    return -i_max + np.floor((c + i_max) / step + 0.5) * step
