# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled element kernels; same signatures as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow

cnp.import_array()


def element_gradients(const long[:, ::1] conn, const long[::1] etype, const double[:, :, ::1] gref,
                      const double[:, ::1] values):
    cdef Py_ssize_t n_el = conn.shape[0], nv = conn.shape[1], d = gref.shape[2], m = values.shape[1]
    cdef Py_ssize_t e, a, c, j, node, k
    out_arr = np.zeros((n_el, m, d))
    cdef double[:, :, ::1] out = out_arr
    cdef double u
    for e in range(n_el):
        k = etype[e]
        for a in range(nv):
            node = conn[e, a]
            for c in range(m):
                u = values[node, c]
                for j in range(d):
                    out[e, c, j] += u * gref[k, a, j]
    return out_arr


def scatter_flux(const long[:, ::1] conn, const long[::1] etype, const double[:, :, ::1] gref,
                 const double[:, :, ::1] flux, double vol, Py_ssize_t n_nodes):
    cdef Py_ssize_t n_el = conn.shape[0], nv = conn.shape[1], d = gref.shape[2], m = flux.shape[1]
    cdef Py_ssize_t e, a, c, j, node, k
    out_arr = np.zeros((n_nodes, m))
    cdef double[:, ::1] out = out_arr
    cdef double acc
    for e in range(n_el):
        k = etype[e]
        for a in range(nv):
            node = conn[e, a]
            for c in range(m):
                acc = 0.0
                for j in range(d):
                    acc += flux[e, c, j] * gref[k, a, j]
                out[node, c] += vol * acc
    return out_arr


def power_energy_grad(const long[:, ::1] conn, const long[::1] etype, const double[:, :, ::1] gref,
                      const double[:, ::1] values, const double[:, ::1] A, const double[::1] Lam,
                      double vol, double p, double s, double delta, double lam_w):
    cdef Py_ssize_t n_el = conn.shape[0], nv = conn.shape[1], d = gref.shape[2], m = values.shape[1]
    cdef Py_ssize_t e, a, c, j, node, k
    out_arr = np.zeros((values.shape[0], m))
    cdef double[:, ::1] out = out_arr
    cdef double eta[64]
    cdef double r2, val, dval, base, energy = 0.0, acc, dp
    if m * d > 64:
        raise ValueError("m * d too large for the compiled kernel")
    dp = pow(delta, p) if delta > 0 else 0.0
    for e in range(n_el):
        k = etype[e]
        for c in range(m):
            for j in range(d):
                acc = 0.0
                for a in range(nv):
                    acc += values[conn[e, a], c] * gref[k, a, j]
                eta[c * d + j] = acc * A[e, j]
        r2 = 0.0
        for j in range(m * d):
            r2 += eta[j] * eta[j]
        if delta > 0:
            base = delta * delta + r2
            val = pow(base, 0.5 * p) - dp
            dval = p * pow(base, 0.5 * p - 1.0)
        elif r2 > 0:
            val = pow(r2, 0.5 * p)
            dval = p * pow(r2, 0.5 * p - 1.0)
        else:
            val = 0.0
            dval = p if p == 2.0 else 0.0
        energy += s * val + lam_w * Lam[e]
        dval *= s * vol
        for a in range(nv):
            node = conn[e, a]
            for c in range(m):
                acc = 0.0
                for j in range(d):
                    acc += eta[c * d + j] * A[e, j] * gref[k, a, j]
                out[node, c] += dval * acc
    return vol * energy, out_arr
