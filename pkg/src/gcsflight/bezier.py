"""Bernstein-basis curves: evaluation, derivative control nets, time scaling.

A planned segment is a pair of equal-degree curves: a planar shape curve
r(xi) and a scalar, strictly increasing timing curve h(xi) mapping the
parameter to physical time. Derivatives with respect to time follow from the
chain rule through h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from gcsflight import kernels

# Binomial coefficients stay exact in float64 up to this degree; the planner
# caps the configurable curve degree accordingly.
MAX_DEGREE = 20

# Lower bound on timing-derivative control points (seconds). A strict margin,
# not just positivity: it keeps h invertible and makes the speed cones imply
# a finite speed.
MIN_TIMING_RATE = 1e-3

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


@dataclass(frozen=True)
class BezierCurve:
    """Immutable Bernstein-form curve of dimension 1 or 2.

    ``control_points`` has shape (degree + 1, d). Degree-0 (constant) curves
    are permitted so that repeated differentiation stays closed.
    """

    control_points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.control_points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("control_points must be a 2-D array (n_points, dim)")
        if pts.shape[0] < 1:
            raise ValueError("need at least one control point")
        if pts.shape[1] not in (1, 2):
            raise ValueError(f"curve dimension must be 1 or 2, got {pts.shape[1]}")
        if pts.shape[0] - 1 > MAX_DEGREE:
            raise ValueError(f"degree {pts.shape[0] - 1} exceeds cap {MAX_DEGREE}")
        pts.setflags(write=False)
        object.__setattr__(self, "control_points", pts)

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.control_points.shape[1]

    @classmethod
    def from_points(cls, points) -> "BezierCurve":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(pts)


def bernstein_value(m: int, k: int, xi: float) -> float:
    """Value of the k-th degree-m Bernstein polynomial at xi."""
    if not 0 <= k <= m:
        raise ValueError(f"index k = {k} out of range for degree {m}")
    return math.comb(m, k) * xi**k * (1.0 - xi) ** (m - k)


def evaluate(curve: BezierCurve, xi: float) -> np.ndarray:
    """Evaluate a curve at one parameter via de Casteljau recursion."""
    return kernels.decasteljau_many(curve.control_points, np.array([xi]))[0]


def evaluate_many(curve: BezierCurve, xis: np.ndarray) -> np.ndarray:
    """Evaluate a curve at an array of parameters; returns (N, dim)."""
    return kernels.decasteljau_many(curve.control_points, np.asarray(xis, dtype=np.float64))


@lru_cache(maxsize=256)
def derivative_matrix(m: int, p: int) -> np.ndarray:
    """Linear map from degree-m control points to p-th derivative control points.

    Shape (m + 1 - p, m + 1); entries are the exact integer finite-difference
    coefficients scaled by m! / (m - p)!.
    """
    if not 0 <= p <= m:
        raise ValueError(f"derivative order p = {p} out of range for degree {m}")
    scale = math.factorial(m) // math.factorial(m - p)
    mat = np.zeros((m + 1 - p, m + 1))
    for k in range(m + 1 - p):
        for j in range(p + 1):
            mat[k, k + j] = scale * (-1) ** (p - j) * math.comb(p, j)
    mat.setflags(write=False)
    return mat


def derivative_ctrl(curve: BezierCurve, p: int) -> BezierCurve:
    """Control points of the p-th derivative curve (degree m - p).

    Computed by successive scaled first differences, so composing two
    first-derivative calls reproduces the second derivative bit for bit.
    """
    m = curve.degree
    if not 0 <= p <= m:
        raise ValueError(f"derivative order p = {p} out of range for degree {m}")
    if p == 0:
        return curve
    pts = curve.control_points
    for j in range(p):
        pts = (m - j) * (pts[1:] - pts[:-1])
    return BezierCurve(pts)


@dataclass(frozen=True)
class SegmentPair:
    """One trajectory segment: 2-D shape curve plus monotone 1-D timing curve."""

    shape: BezierCurve
    timing: BezierCurve

    def __post_init__(self):
        if self.shape.dim != 2 or self.timing.dim != 1:
            raise ValueError("shape must be 2-D and timing 1-D")
        if self.shape.degree != self.timing.degree:
            raise ValueError("shape and timing must share their degree")
        if self.shape.degree < 1:
            raise ValueError("segment curves need degree >= 1")
        rate = derivative_ctrl(self.timing, 1).control_points
        # allow solver-tolerance slack below the strict margin
        if np.min(rate) < MIN_TIMING_RATE - 1e-9:
            raise ValueError(
                f"timing-rate control points must be >= {MIN_TIMING_RATE}, min is {np.min(rate):.3e}"
            )

    @property
    def degree(self) -> int:
        return self.shape.degree

    @property
    def start_time(self) -> float:
        return float(self.timing.control_points[0, 0])

    @property
    def end_time(self) -> float:
        return float(self.timing.control_points[-1, 0])

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


def time_sample(pair: SegmentPair, t: float, tol: float = 1e-12) -> float:
    """Invert the timing curve: the xi in [0, 1] with h(xi) = t.

    Bisection is valid because the timing rate is bounded away from zero.
    """
    t0, t1 = pair.start_time, pair.end_time
    if not t0 - 1e-9 <= t <= t1 + 1e-9:
        raise ValueError(f"t = {t} outside segment time range [{t0}, {t1}]")
    t = min(max(t, t0), t1)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if float(evaluate(pair.timing, mid)[0]) < t:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kinematics(pair: SegmentPair, xi: float):
    """Time, position, velocity and acceleration at parameter xi.

    Velocity and acceleration are with respect to physical time, obtained by
    the chain rule through the timing curve.
    """
    r1 = derivative_ctrl(pair.shape, 1)
    r2 = derivative_ctrl(pair.shape, 2) if pair.degree >= 2 else None
    h1 = derivative_ctrl(pair.timing, 1)
    h2 = derivative_ctrl(pair.timing, 2) if pair.degree >= 2 else None

    t = float(evaluate(pair.timing, xi)[0])
    pos = evaluate(pair.shape, xi)
    dr = evaluate(r1, xi)
    dh = float(evaluate(h1, xi)[0])
    if dh <= 0:
        raise ValueError(f"timing rate {dh} <= 0 at xi = {xi}; segment is corrupted")
    vel = dr / dh
    if pair.degree >= 2:
        ddr = evaluate(r2, xi)
        ddh = float(evaluate(h2, xi)[0])
    else:
        ddr = np.zeros(2)
        ddh = 0.0
    acc = (ddr * dh - dr * ddh) / dh**3
    return t, pos, vel, acc


def kinematics_many(pair: SegmentPair, xis: np.ndarray):
    """Vectorized ``kinematics`` over a parameter grid; returns (t, pos, vel, acc)."""
    xis = np.asarray(xis, dtype=np.float64)
    r1 = derivative_ctrl(pair.shape, 1)
    h1 = derivative_ctrl(pair.timing, 1)
    t = evaluate_many(pair.timing, xis)[:, 0]
    pos = evaluate_many(pair.shape, xis)
    dr = evaluate_many(r1, xis)
    dh = evaluate_many(h1, xis)[:, 0]
    if np.min(dh) <= 0:
        raise ValueError("timing rate <= 0 on sample grid; segment is corrupted")
    vel = dr / dh[:, None]
    if pair.degree >= 2:
        ddr = evaluate_many(derivative_ctrl(pair.shape, 2), xis)
        ddh = evaluate_many(derivative_ctrl(pair.timing, 2), xis)[:, 0]
    else:
        ddr = np.zeros_like(dr)
        ddh = np.zeros_like(dh)
    acc = (ddr * dh[:, None] - dr * ddh[:, None]) / (dh**3)[:, None]
    return t, pos, vel, acc


def _speed_integral(deriv_pts: np.ndarray, a: float, b: float) -> float:
    half = 0.5 * (b - a)
    xs = 0.5 * (a + b) + half * _GL_NODES
    vals = kernels.decasteljau_many(deriv_pts, xs)
    speeds = np.hypot(vals[:, 0], vals[:, 1]) if vals.shape[1] == 2 else np.abs(vals[:, 0])
    return half * float(_GL_WEIGHTS @ speeds)


def arc_length(curve: BezierCurve, tol: float = 1e-9) -> float:
    """Arc length by adaptive Gauss-Legendre quadrature on the speed.

    Intervals are halved until the two-panel estimate agrees with the
    one-panel estimate to the requested relative tolerance.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if curve.degree == 0:
        return 0.0
    deriv = derivative_matrix(curve.degree, 1) @ curve.control_points

    def refine(a: float, b: float, whole: float, depth: int) -> float:
        mid = 0.5 * (a + b)
        left = _speed_integral(deriv, a, mid)
        right = _speed_integral(deriv, mid, b)
        if depth >= 30 or abs(left + right - whole) <= tol * max(abs(left + right), 1e-30):
            return left + right
        return refine(a, mid, left, depth + 1) + refine(mid, b, right, depth + 1)

    return refine(0.0, 1.0, _speed_integral(deriv, 0.0, 1.0), 0)
