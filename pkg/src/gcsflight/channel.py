"""Air-to-ground link model: geometry, LoS-weighted mean path loss, received SNR.

All functions are pure and operate on immutable parameter records, so they are
safe to call concurrently. Angles are in degrees (the logistic LoS parameters
are degree-scale), distances in meters, powers in watts, SNR linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gcsflight import kernels

SPEED_OF_LIGHT_MPS = 299792458.0

# Below this free-space distance the far-field loss model is meaningless;
# clamp to keep snr() finite everywhere.
NEAR_FIELD_CLAMP_M = 1.0


@dataclass(frozen=True)
class BaseStation:
    """A ground base station: planar position plus antenna height."""

    id: int
    x_m: float
    y_m: float
    z_m: float

    def __post_init__(self):
        if self.z_m < 0:
            raise ValueError(f"BS {self.id}: antenna height must be >= 0, got {self.z_m}")

    @property
    def ground_xy(self) -> tuple[float, float]:
        return (self.x_m, self.y_m)


@dataclass(frozen=True)
class ChannelParams:
    """Air-to-ground channel constants.

    ``eta_los``/``eta_nlos`` are linear excess-loss factors (use ``from_db``
    to convert dB figures once at load time).
    """

    fc_hz: float
    a_logistic: float
    b_logistic: float
    eta_los: float
    eta_nlos: float
    tx_power_w: float
    rx_gain: float
    noise_w: float
    c_mps: float = SPEED_OF_LIGHT_MPS

    def __post_init__(self):
        for name in (
            "fc_hz",
            "a_logistic",
            "b_logistic",
            "eta_los",
            "eta_nlos",
            "tx_power_w",
            "rx_gain",
            "noise_w",
            "c_mps",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"ChannelParams.{name} must be > 0, got {getattr(self, name)}")
        if self.eta_nlos < self.eta_los:
            raise ValueError("eta_nlos must be >= eta_los")

    @classmethod
    def from_db(
        cls,
        fc_hz: float,
        a_logistic: float,
        b_logistic: float,
        eta_los_db: float,
        eta_nlos_db: float,
        tx_power_w: float,
        rx_gain: float,
        noise_w: float,
        c_mps: float = SPEED_OF_LIGHT_MPS,
    ) -> "ChannelParams":
        return cls(
            fc_hz=fc_hz,
            a_logistic=a_logistic,
            b_logistic=b_logistic,
            eta_los=10.0 ** (eta_los_db / 10.0),
            eta_nlos=10.0 ** (eta_nlos_db / 10.0),
            tx_power_w=tx_power_w,
            rx_gain=rx_gain,
            noise_w=noise_w,
            c_mps=c_mps,
        )


def link_geometry(uav_pos: Sequence[float], bs: BaseStation) -> tuple[float, float]:
    """3D link distance (m) and elevation angle (degrees) from BS to UAV.

    Total function: a vertical link (zero horizontal offset) has a 90 degree
    elevation when the UAV is above the antenna; coincident points return
    (0.0, 90.0) by convention.
    """
    dx = uav_pos[0] - bs.x_m
    dy = uav_pos[1] - bs.y_m
    dz = uav_pos[2] - bs.z_m
    horiz = math.hypot(dx, dy)
    d = math.hypot(horiz, dz)
    if d == 0.0:
        return 0.0, 90.0
    theta = math.degrees(math.atan2(dz, horiz))
    return d, theta


def los_probability(theta_deg: float, params: ChannelParams) -> float:
    """Line-of-sight probability as a logistic function of elevation angle."""
    a = params.a_logistic
    return 1.0 / (1.0 + a * math.exp(-params.b_logistic * (theta_deg - a)))


def _loss_at(d_m: float, theta_deg: float, params: ChannelParams) -> float:
    p = los_probability(theta_deg, params)
    free_space = (4.0 * math.pi * params.fc_hz * d_m / params.c_mps) ** 2
    return free_space * (p * params.eta_los + (1.0 - p) * params.eta_nlos)


def mean_path_loss(uav_pos: Sequence[float], bs: BaseStation, params: ChannelParams) -> float:
    """LoS-probability-weighted mean path loss (linear, dimensionless).

    Returns 0 for coincident points; ``snr`` applies the near-field clamp.
    """
    d, theta = link_geometry(uav_pos, bs)
    return _loss_at(d, theta, params)


def snr(uav_pos: Sequence[float], bs: BaseStation, params: ChannelParams) -> float:
    """Received linear SNR at the UAV from one BS.

    The free-space distance is clamped to 1 m so degenerate geometry stays
    finite; the clamp is never active for ordinary height gaps.
    """
    d, theta = link_geometry(uav_pos, bs)
    loss = _loss_at(max(d, NEAR_FIELD_CLAMP_M), theta, params)
    return params.rx_gain * params.tx_power_w / (loss * params.noise_w)


def snr_radial(r_m: np.ndarray, bs_z_m: float, altitude_m: float, params: ChannelParams) -> np.ndarray:
    """SNR over an array of horizontal distances at fixed UAV altitude."""
    return kernels.snr_profile(
        np.asarray(r_m, dtype=np.float64),
        altitude_m - bs_z_m,
        params.fc_hz,
        params.c_mps,
        params.a_logistic,
        params.b_logistic,
        params.eta_los,
        params.eta_nlos,
        params.tx_power_w,
        params.rx_gain,
        params.noise_w,
    )


def snr_points(points_xy: np.ndarray, altitude_m: float, bs: BaseStation, params: ChannelParams) -> np.ndarray:
    """SNR from one BS at many planar UAV positions (shape (N, 2)) at fixed altitude."""
    pts = np.asarray(points_xy, dtype=np.float64)
    r = np.hypot(pts[:, 0] - bs.x_m, pts[:, 1] - bs.y_m)
    return snr_radial(r, bs.z_m, altitude_m, params)
