# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation kernels (curve evaluation, SNR field sampling).

Mirrors ``gcsflight._kernels_py``; selected by ``gcsflight.kernels``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, exp, hypot, M_PI

cnp.import_array()

DEF NEAR_FIELD_CLAMP = 1.0


def decasteljau_many(ctrl, xi):
    """Evaluate a Bernstein-basis curve at many parameter values.

    ctrl: (m+1, d) control points, xi: (N,) parameters in [0, 1].
    Returns an (N, d) array of curve points.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(ctrl, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(xi, dtype=np.float64)
    cdef Py_ssize_t npts = c.shape[0]
    cdef Py_ssize_t dim = c.shape[1]
    cdef Py_ssize_t nxi = t.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nxi, dim), dtype=np.float64)
    # scratch buffer for one de Casteljau ladder, laid out (point, coord)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] work = np.empty((npts, dim), dtype=np.float64)
    cdef Py_ssize_t i, j, k, q
    cdef double u, v
    for i in range(nxi):
        u = t[i]
        v = 1.0 - u
        for k in range(npts):
            for q in range(dim):
                work[k, q] = c[k, q]
        for j in range(npts - 1):
            for k in range(npts - 1 - j):
                for q in range(dim):
                    work[k, q] = v * work[k, q] + u * work[k + 1, q]
        for q in range(dim):
            out[i, q] = work[0, q]
    return out


def snr_profile(
    r_m,
    double dz_m,
    double fc_hz,
    double c_mps,
    double a_logistic,
    double b_logistic,
    double eta_los,
    double eta_nlos,
    double tx_power_w,
    double rx_gain,
    double noise_w,
):
    """Received SNR versus horizontal distance at a fixed height gap.

    r_m: (N,) horizontal distances (m), dz_m: signed UAV-antenna height gap (m).
    Free-space distance is clamped to 1 m to keep the near field finite.
    Returns linear SNR, shape (N,).
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = np.ascontiguousarray(r_m, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double fs_coeff = 4.0 * M_PI * fc_hz / c_mps
    cdef double rad_to_deg = 180.0 / M_PI
    cdef double num = rx_gain * tx_power_w / noise_w
    cdef Py_ssize_t i
    cdef double d, theta, p, loss
    for i in range(n):
        d = hypot(r[i], dz_m)
        theta = atan2(dz_m, r[i]) * rad_to_deg
        if d < NEAR_FIELD_CLAMP:
            d = NEAR_FIELD_CLAMP
        p = 1.0 / (1.0 + a_logistic * exp(-b_logistic * (theta - a_logistic)))
        loss = fs_coeff * fs_coeff * d * d * (p * eta_los + (1.0 - p) * eta_nlos)
        out[i] = num / loss
    return out
