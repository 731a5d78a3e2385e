"""Numpy implementations of the hot evaluation kernels.

Same call signatures as the compiled module ``gcsflight._kernels``;
``gcsflight.kernels`` picks whichever is available at import time.
"""

import numpy as np

RAD_TO_DEG = 180.0 / np.pi
NEAR_FIELD_CLAMP_M = 1.0


def decasteljau_many(ctrl, xi):
    """Evaluate a Bernstein-basis curve at many parameter values.

    ctrl: (m+1, d) control points, xi: (N,) parameters in [0, 1].
    Returns an (N, d) array of curve points.
    """
    ctrl = np.ascontiguousarray(ctrl, dtype=np.float64)
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    n = ctrl.shape[0] - 1
    b = np.broadcast_to(ctrl, (xi.shape[0],) + ctrl.shape).copy()
    t = xi[:, None, None]
    for j in range(n):
        b[:, : n - j, :] = (1.0 - t) * b[:, : n - j, :] + t * b[:, 1 : n - j + 1, :]
    return np.ascontiguousarray(b[:, 0, :])


def snr_profile(
    r_m,
    dz_m,
    fc_hz,
    c_mps,
    a_logistic,
    b_logistic,
    eta_los,
    eta_nlos,
    tx_power_w,
    rx_gain,
    noise_w,
):
    """Received SNR versus horizontal distance at a fixed height gap.

    r_m: (N,) horizontal distances (m), dz_m: signed UAV-antenna height gap (m).
    Free-space distance is clamped to 1 m to keep the near field finite.
    Returns linear SNR, shape (N,).
    """
    r = np.ascontiguousarray(r_m, dtype=np.float64)
    d = np.hypot(r, dz_m)
    theta_deg = np.arctan2(dz_m, r) * RAD_TO_DEG
    d_eff = np.maximum(d, NEAR_FIELD_CLAMP_M)
    p_los = 1.0 / (1.0 + a_logistic * np.exp(-b_logistic * (theta_deg - a_logistic)))
    free_space = (4.0 * np.pi * fc_hz / c_mps * d_eff) ** 2
    loss = free_space * (p_los * eta_los + (1.0 - p_los) * eta_nlos)
    return rx_gain * tx_power_w / (loss * noise_w)
