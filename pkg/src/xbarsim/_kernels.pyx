# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror ``xbarsim._fallback`` exactly."""

import numpy as np

from libc.math cimport ceil, floor, pow


cdef inline double _rate(double v, double v_on, double v_off, double k_on,
                         double k_off, double alpha_on, double alpha_off) nogil:
    if v > v_off:
        return k_off * pow(v / v_off - 1.0, alpha_off)
    if v < v_on:
        return k_on * pow(v / v_on - 1.0, alpha_on)
    return 0.0


def vteam_integrate(const double[::1] t, const double[::1] v, double w0,
                    double r_on, double r_off, double v_on, double v_off,
                    double k_on, double k_off, double alpha_on, double alpha_off,
                    double w_min, double w_max, double dt):
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t k, s, m
    cdef double w = w0, x, span, h, dv, vs
    cdef double width = w_max - w_min
    i_arr = np.empty(n, dtype=np.float64)
    w_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] i_out = i_arr
    cdef double[::1] w_out = w_arr
    with nogil:
        for k in range(n):
            w_out[k] = w
            x = (w - w_min) / width
            i_out[k] = v[k] / (r_on * x + r_off * (1.0 - x))
            if k + 1 == n:
                break
            span = t[k + 1] - t[k]
            m = <Py_ssize_t>ceil(span / dt - 1e-9)
            if m < 1:
                m = 1
            h = span / m
            dv = (v[k + 1] - v[k]) / m
            for s in range(m):
                vs = v[k] + dv * s
                w += h * _rate(vs, v_on, v_off, k_on, k_off, alpha_on, alpha_off)
                if w < w_min:
                    w = w_min
                elif w > w_max:
                    w = w_max
    return i_arr, w_arr


def im2col(const double[:, :, :, ::1] x, int kernel, int stride, int padding):
    cdef Py_ssize_t n_img = x.shape[0], chans = x.shape[1]
    cdef Py_ssize_t height = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t out_h = (height + 2 * padding - kernel) // stride + 1
    cdef Py_ssize_t out_w = (width + 2 * padding - kernel) // stride + 1
    cdef Py_ssize_t ncol = chans * kernel * kernel
    out_arr = np.zeros((n_img * out_h * out_w, ncol), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, c, oy, ox, ky, kx, iy, ix, row, col
    with nogil:
        for b in range(n_img):
            for oy in range(out_h):
                for ox in range(out_w):
                    row = (b * out_h + oy) * out_w + ox
                    col = 0
                    for c in range(chans):
                        for ky in range(kernel):
                            iy = oy * stride + ky - padding
                            for kx in range(kernel):
                                ix = ox * stride + kx - padding
                                if 0 <= iy < height and 0 <= ix < width:
                                    out[row, col] = x[b, c, iy, ix]
                                col += 1
    return out_arr


def adc_quantize(const double[::1] current, double i_max, int bits):
    cdef Py_ssize_t n = current.shape[0], k
    cdef double step = 2.0 * i_max / (pow(2.0, bits) - 1.0)
    cdef double c
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for k in range(n):
            c = current[k]
            if c > i_max:
                c = i_max
            elif c < -i_max:
                c = -i_max
            out[k] = -i_max + floor((c + i_max) / step + 0.5) * step
    return out_arr
