"""Longitudinal PID and lateral finite-horizon optimal steering.

Longitudinal control is the discrete PID law

    u[k] = Kp*e[k] + Ki * sum_{i=0..k} e[i]*dt + Kd * (e[k] - e[k-1]) / dt

implemented incrementally with the current sample included in the integral,
e[-1] = 0, and anti-windup by clamping the integral magnitude.

Lateral control minimizes a quadratic cost over a linear time-varying
lateral/heading error model:

    z = [e_lat, e_psi]
    z_{k+1} = A_k z_k + B_k u_k + d_k
    A_k = [[1, dt*v], [0, 1]]
    B_k = [0, dt*v/L]
    d_k = [0, -dt*v*kappa_ref[k]]
    cost = sum_{k<N} (z_k' Q z_k + R u_k^2) + z_N' (P_t * Q) z_N
    Q = diag(w_lat, w_head),  R = 1 + c_speed * v

solved exactly by a backward dynamic-programming recursion on the value
function V(z) = z'Sz + 2*l'z + const, carried as scalars for speed. The
first optimal input is applied, clamped to the steering limit. The speed
coefficient c_speed raises the steering-effort penalty with velocity,
which limits steering authority as the vehicle goes faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from drivebench.autonomy.trajectory import Trajectory
from drivebench.autonomy.perception import VehicleState
from drivebench.defaults import VehicleParams
from drivebench.simworld import ControlCommand, wrap_angle


@dataclass(frozen=True)
class PidGains:
    Kp: float
    Ki: float
    Kd: float

    def __post_init__(self) -> None:
        if self.Kp < 0 or self.Ki < 0 or self.Kd < 0:
            raise ValueError("PID gains must be non-negative")


@dataclass(frozen=True)
class PidState:
    """Carried between PID steps: accumulated integral and previous error."""

    integral: float = 0.0
    prev_error: float = 0.0
    dt: float = 0.1

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("PID dt must be positive")


@dataclass(frozen=True)
class MpcWeights:
    """Lateral cost weights plus horizon settings.

    w_lat / w_head weight the squared lateral and heading errors; c_speed
    scales the input penalty with speed; terminal_weight multiplies Q at
    the horizon end.
    """

    w_lat: float
    w_head: float
    c_speed: float
    horizon: int = 12
    dt: float = 0.1
    terminal_weight: float = 5.0

    def __post_init__(self) -> None:
        if self.w_lat < 0 or self.w_head < 0:
            raise ValueError("state weights must be non-negative")
        if self.w_lat == 0 and self.w_head == 0:
            raise ValueError("w_lat and w_head cannot both be zero")
        if self.c_speed < 0:
            raise ValueError("c_speed must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def pid_speed_control(
    e_k: float,
    state: PidState,
    gains: PidGains,
    a_max: float = math.inf,
    integral_limit: float = math.inf,
) -> tuple[float, PidState]:
    """One PID step on the speed error; returns (command, next state)."""
    integral = state.integral + e_k * state.dt
    integral = min(integral_limit, max(-integral_limit, integral))
    u = (
        gains.Kp * e_k
        + gains.Ki * integral
        + gains.Kd * (e_k - state.prev_error) / state.dt
    )
    u = min(a_max, max(-a_max, u))
    return u, PidState(integral=integral, prev_error=e_k, dt=state.dt)


def _dp_gains(
    v: float,
    kappa_ref: list[float] | np.ndarray,
    weights: MpcWeights,
    wheelbase: float,
) -> list[tuple[float, float, float, float]]:
    """Backward recursion; returns per-step feedback terms (g1, g2, gc, H).

    The optimal input at step k is u_k = -(g1*e_lat + g2*e_psi + gc) / H.
    """
    n = weights.horizon
    q1, q2 = weights.w_lat, weights.w_head
    a = weights.dt * v
    b = weights.dt * v / wheelbase
    r = 1.0 + weights.c_speed * v
    kappas = list(kappa_ref)[:n]
    kappas += [kappas[-1] if kappas else 0.0] * (n - len(kappas))

    s11, s12, s22 = weights.terminal_weight * q1, 0.0, weights.terminal_weight * q2
    l1, l2 = 0.0, 0.0
    gains: list[tuple[float, float, float, float]] = [(0.0, 0.0, 0.0, 1.0)] * n
    for k in range(n - 1, -1, -1):
        dk = -weights.dt * v * kappas[k]
        h = r + b * b * s22
        g1 = b * s12
        g2 = b * (a * s12 + s22)
        gc = b * (s22 * dk + l2)
        gains[k] = (g1, g2, gc, h)
        sd1 = s12 * dk + l1
        sd2 = s22 * dk + l2
        s11, s12, s22 = (
            q1 + s11 - g1 * g1 / h,
            a * s11 + s12 - g1 * g2 / h,
            q2 + a * a * s11 + 2.0 * a * s12 + s22 - g2 * g2 / h,
        )
        l1, l2 = sd1 - gc * g1 / h, a * sd1 + sd2 - gc * g2 / h
    return gains


def mpc_input_sequence(
    err0: tuple[float, float],
    v: float,
    kappa_ref: list[float] | np.ndarray,
    weights: MpcWeights,
    wheelbase: float,
) -> list[float]:
    """The full unconstrained optimal input sequence over the horizon."""
    gains = _dp_gains(v, kappa_ref, weights, wheelbase)
    a = weights.dt * v
    b = weights.dt * v / wheelbase
    kappas = list(kappa_ref)[: weights.horizon]
    kappas += [kappas[-1] if kappas else 0.0] * (weights.horizon - len(kappas))
    e, psi = err0
    inputs = []
    for (g1, g2, gc, h), kappa in zip(gains, kappas):
        u = -(g1 * e + g2 * psi + gc) / h
        inputs.append(u)
        e, psi = e + a * psi, psi + b * u - weights.dt * v * kappa
    return inputs


def mpc_lateral_control(
    err0: tuple[float, float],
    v: float,
    kappa_ref: list[float] | np.ndarray,
    weights: MpcWeights,
    wheelbase: float,
    delta_max: float,
) -> float:
    """First optimal steering input, clamped to [-delta_max, delta_max]."""
    if weights.horizon < 1:
        raise ValueError("horizon must be >= 1")
    if weights.w_lat == 0 and weights.w_head == 0:
        raise ValueError("w_lat and w_head cannot both be zero")
    if v < 0:
        raise ValueError("speed must be non-negative")
    g1, g2, gc, h = _dp_gains(v, kappa_ref, weights, wheelbase)[0]
    u = -(g1 * err0[0] + g2 * err0[1] + gc) / h
    return min(delta_max, max(-delta_max, u))


def track(
    trajectory: Trajectory,
    state: VehicleState,
    gains: PidGains,
    weights: MpcWeights,
    pid_state: PidState,
    vehicle: VehicleParams = VehicleParams(),
) -> tuple[ControlCommand, PidState]:
    """Track a trajectory: PID on speed error, optimal steering on path error.

    The nearest waypoint supplies the speed reference; the local path
    tangent there defines the lateral/heading errors (positive e_lat means
    the vehicle sits left of the path). The curvature preview for the
    steering horizon walks the path at v * dt per step.
    """
    xs, ys = trajectory.xs, trajectory.ys
    n = len(xs)
    if n < 2:
        raise ValueError("trajectory is degenerate")
    d2 = (xs - state.x) ** 2 + (ys - state.y) ** 2
    i = int(np.argmin(d2))
    j = i + 1 if i + 1 < n else i
    k = i if i + 1 < n else i - 1
    theta = math.atan2(ys[j] - ys[k], xs[j] - xs[k])

    e_lat = -math.sin(theta) * (state.x - xs[i]) + math.cos(theta) * (state.y - ys[i])
    e_psi = wrap_angle(state.psi - theta)
    e_v = float(trajectory.v_ref[i]) - state.v

    accel, next_pid = pid_speed_control(
        e_v,
        pid_state,
        gains,
        a_max=vehicle.a_max,
        integral_limit=vehicle.integral_limit,
    )

    # Curvature preview: waypoint nearest each future arc-length station.
    seg = np.hypot(np.diff(xs), np.diff(ys))
    arc = np.concatenate(([0.0], np.cumsum(seg)))
    stations = arc[i] + state.v * weights.dt * np.arange(weights.horizon)
    idx = np.minimum(np.searchsorted(arc, stations), n - 1)
    kappa_preview = trajectory.kappa[idx]

    steer = mpc_lateral_control(
        (e_lat, e_psi),
        state.v,
        kappa_preview,
        weights,
        vehicle.wheelbase,
        vehicle.delta_max,
    )
    return ControlCommand(accel=accel, steer=steer), next_pid
