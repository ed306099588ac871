# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Mirrors ``_fallback`` function for function."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, cos, sin, log1p, atan2, M_PI, floor
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex csqrt(double complex)
    double complex cexp(double complex)
    double complex clog(double complex)
    double creal(double complex)
    double cimag(double complex)


def cir_euler_days(double v0, Py_ssize_t n_days, Py_ssize_t substeps,
                   double gamma, double theta, double k, double rho,
                   const double[::1] z1, const double[::1] z2):
    cdef double dt = 1.0 / substeps
    cdef double rho_bar = sqrt(max(0.0, 1.0 - rho * rho))
    cdef cnp.ndarray[double, ndim=1] dx_arr = np.empty(n_days)
    cdef cnp.ndarray[double, ndim=1] vd_arr = np.empty(n_days)
    cdef double[::1] dx = dx_arr
    cdef double[::1] vd = vd_arr
    cdef double v = v0, vp, sq, a, acc
    cdef Py_ssize_t d, s, j = 0
    if z1.shape[0] < n_days * substeps or z2.shape[0] < n_days * substeps:
        raise ValueError("not enough normal draws for the requested days")
    with nogil:
        for d in range(n_days):
            acc = 0.0
            for s in range(substeps):
                vp = v if v > 0.0 else 0.0
                sq = sqrt(vp * dt)
                a = z1[j]
                acc += -0.5 * vp * dt + sq * a
                v = v - gamma * (vp - theta) * dt + k * sq * (rho * a + rho_bar * z2[j])
                j += 1
            dx[d] = acc
            vd[d] = v if v > 0.0 else 0.0
    return dx_arr, vd_arr, v


cdef inline double complex _clog1p(double complex z) noexcept nogil:
    cdef double x = creal(z), y = cimag(z)
    return 0.5 * log1p(2.0 * x + x * x + y * y) + 1j * atan2(y, 1.0 + x)


cdef inline double _follow(double phase, double prev, bint first) noexcept nogil:
    # shift by 2*pi multiples onto the branch closest to the previous node
    if first:
        return phase
    return phase - 2.0 * M_PI * floor((phase - prev) / (2.0 * M_PI) + 0.5)


def char_exponent_array(p_in, double t, double gamma, double theta, double k, double rho):
    cdef const double[::1] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double c = 2.0 * gamma * theta / (k * k)
    cdef double complex q, bg, om, s, e, ome, drift, tgms, oma3, l3, num, den, lin
    cdef double ph3 = 0.0, phn = 0.0, phd = 0.0
    cdef bint first
    with nogil:
        for i in range(n):
            first = i == 0
            q = p[i] * p[i] - 1j * p[i]
            drift = 1j * rho * k * p[i]
            bg = gamma + drift
            om = csqrt(bg * bg + k * k * q)
            s = bg + om
            e = cexp(-om * t)
            ome = 1.0 - e
            lin = -gamma * theta * t * q / s
            tgms = -drift - (drift * (2.0 * gamma + drift) + k * k * q) / (gamma + om)
            oma3 = k * k * q * tgms / (s * 2.0 * gamma * om)
            l3 = _clog1p(-0.5 * oma3 * ome)
            ph3 = _follow(cimag(l3), ph3, first)
            l3 = creal(l3) + 1j * ph3
            if rho != 0.0:
                num = clog((1.0 + gamma / om) + (1.0 - gamma / om) * e)
                den = clog((1.0 + bg / om) + (1.0 - bg / om) * e)
                phn = _follow(cimag(num), phn, first)
                phd = _follow(cimag(den), phd, first)
                num = creal(num) + 1j * phn
                den = creal(den) + 1j * phd
                out[i] = lin - c * (num - den + l3)
            else:
                out[i] = lin - c * l3
    return out_arr


cdef inline double _row(const double[::1] p, const double[::1] a, const double[::1] b,
                        double xi) noexcept nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0, arg
    for j in range(p.shape[0]):
        arg = p[j] * xi
        acc = acc + a[j] * cos(arg) - b[j] * sin(arg)
    return acc


def fourier_invert(x_in, p_in, w_in, re_in, im_in):
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] a_arr = np.ascontiguousarray(w_in * re_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] b_arr = np.ascontiguousarray(w_in * im_in, dtype=np.float64)
    cdef const double[::1] a = a_arr
    cdef const double[::1] b = b_arr
    cdef Py_ssize_t nx = x.shape[0], i
    cdef cnp.ndarray[double, ndim=1] out_arr = np.empty(nx)
    cdef double[::1] out = out_arr
    # rows are independent, so the parallel result is bit-identical to serial
    with nogil:
        for i in prange(nx, schedule="static"):
            out[i] = _row(p, a, b, x[i])
    return out_arr


DEF ANCHOR = 64

cdef void _uniform_block(const double[::1] p, const double[::1] cr, const double[::1] ci,
                         const double[::1] rr, const double[::1] ri, double x0, double dx,
                         Py_ssize_t start, Py_ssize_t stop, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double xs = x0 + start * dx, arg, c, s, acc
    cdef double* zr = <double*> malloc(p.shape[0] * sizeof(double))
    cdef double* zi = <double*> malloc(p.shape[0] * sizeof(double))
    for j in range(p.shape[0]):
        arg = p[j] * xs
        c = cos(arg)
        s = sin(arg)
        zr[j] = cr[j] * c - ci[j] * s
        zi[j] = cr[j] * s + ci[j] * c
    for i in range(start, stop):
        acc = 0.0
        for j in range(p.shape[0]):
            acc = acc + zr[j]
            c = zr[j] * rr[j] - zi[j] * ri[j]
            zi[j] = zr[j] * ri[j] + zi[j] * rr[j]
            zr[j] = c
        out[i] = acc
    free(zr)
    free(zi)


def fourier_invert_uniform(double x0, double dx, Py_ssize_t nx, p_in, w_in, re_in, im_in):
    """``fourier_invert`` on the grid ``x0 + i*dx``: phases advance by one complex
    multiply per row and are recomputed exactly every ``ANCHOR`` rows."""
    cdef const double[::1] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] cr_arr = np.ascontiguousarray(w_in * re_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ci_arr = np.ascontiguousarray(w_in * im_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] rr_arr = np.cos(np.asarray(p) * dx)
    cdef cnp.ndarray[double, ndim=1] ri_arr = np.sin(np.asarray(p) * dx)
    cdef const double[::1] cr = cr_arr
    cdef const double[::1] ci = ci_arr
    cdef const double[::1] rr = rr_arr
    cdef const double[::1] ri = ri_arr
    cdef cnp.ndarray[double, ndim=1] out_arr = np.empty(nx)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t nb = (nx + ANCHOR - 1) // ANCHOR, b
    with nogil:
        for b in prange(nb, schedule="static"):
            _uniform_block(p, cr, ci, rr, ri, x0, dx, b * ANCHOR, min((b + 1) * ANCHOR, nx), out)
    return out_arr
