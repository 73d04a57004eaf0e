"""Target dynamics and the bearing observation model.

States are laid out as ``[X, Xdot, Y, Ydot]`` (metres, metres/second).
Every function here accepts either a single state of shape ``(n_x,)`` or a
batch of shape ``(N, n_x)``; sensor positions are ``(2,)`` or ``(M, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

POSITION_INDICES = (0, 2)


class CoincidentPositionError(ValueError):
    """Raised when a bearing is requested at the sensor location itself."""


def _sinc_terms(omega: float, T: float) -> tuple[float, float]:
    # sin(wT)/w and (1 - cos wT)/w, both well defined as w -> 0
    a = omega * T
    s = T * np.sinc(a / np.pi)
    c = 0.5 * omega * T**2 * np.sinc(a / (2.0 * np.pi)) ** 2
    return float(s), float(c)


def ct_matrix(omega: float, T: float) -> np.ndarray:
    """Clockwise coordinated-turn transition matrix for turn rate ``omega`` (rad/s)."""
    s, c = _sinc_terms(omega, T)
    cw, sw = np.cos(omega * T), np.sin(omega * T)
    return np.array([
        [1.0, s, 0.0, c],
        [0.0, cw, 0.0, sw],
        [0.0, -c, 1.0, s],
        [0.0, -sw, 0.0, cw],
    ])


def cv_matrix(T: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 1] = T
    F[2, 3] = T
    return F


def white_accel_covariance(T: float, q: float) -> np.ndarray:
    """Discretised white-noise-acceleration covariance, intensity ``q`` per axis."""
    block = q * np.array([[T**3 / 3.0, T**2 / 2.0], [T**2 / 2.0, T]])
    Q = np.zeros((4, 4))
    Q[np.ix_([0, 1], [0, 1])] = block
    Q[np.ix_([2, 3], [2, 3])] = block
    return Q


@dataclass(frozen=True)
class ProcessModel:
    """Linear-in-state transition ``x(k) = F x(k-1) + noise`` with noise ~ N(0, Q).

    Build with :func:`coordinated_turn`, :func:`constant_velocity` or
    :func:`linear_model` rather than directly.
    """

    kind: str
    T: float
    Q: np.ndarray
    F: np.ndarray
    omega: float = 0.0
    _Q_inv: np.ndarray = field(init=False, repr=False, compare=False)
    _Q_chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        if self.T <= 0:
            raise ValueError(f"time step must be positive, got {self.T}")
        if Q.shape != F.shape or Q.shape[0] != Q.shape[1]:
            raise ValueError(f"F {F.shape} and Q {Q.shape} must be matching square matrices")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("process noise covariance must be symmetric")
        if np.linalg.eigvalsh(Q).min() <= 0:
            raise ValueError("process noise covariance must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "_Q_inv", np.linalg.inv(Q))
        object.__setattr__(self, "_Q_chol", np.linalg.cholesky(Q))

    @property
    def n_x(self) -> int:
        return self.F.shape[0]

    @property
    def Q_inv(self) -> np.ndarray:
        return self._Q_inv

    def propagate(self, states: np.ndarray) -> np.ndarray:
        return np.asarray(states, dtype=float) @ self.F.T

    def jacobian(self, states: np.ndarray) -> np.ndarray:
        """Per-state Jacobian; shape ``(n_x, n_x)`` or ``(N, n_x, n_x)``."""
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            return self.F.copy()
        return np.broadcast_to(self.F, (states.shape[0],) + self.F.shape).copy()

    def sample_noise(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        n = 1 if size is None else size
        w = rng.standard_normal((n, self.n_x)) @ self._Q_chol.T
        return w[0] if size is None else w


def coordinated_turn(omega: float, T: float, Q: np.ndarray) -> ProcessModel:
    return ProcessModel("coordinated_turn", T, Q, ct_matrix(omega, T), omega)


def constant_velocity(T: float, Q: np.ndarray) -> ProcessModel:
    return ProcessModel("constant_velocity", T, Q, cv_matrix(T))


def linear_model(F, Q, T: float = 1.0) -> ProcessModel:
    return ProcessModel("linear", T, Q, F)


def propagate_mean(state: np.ndarray, model: ProcessModel) -> np.ndarray:
    return model.propagate(state)


def transition_jacobian(state: np.ndarray, model: ProcessModel) -> np.ndarray:
    return model.jacobian(state)


def _offsets(states, sensors):
    states = np.asarray(states, dtype=float)
    sensors = np.asarray(sensors, dtype=float)
    dx = states[..., POSITION_INDICES[0], None] - sensors[..., 0]
    dy = states[..., POSITION_INDICES[1], None] - sensors[..., 1]
    return dx, dy


def bearing(state, sensor) -> np.ndarray:
    """Four-quadrant ``atan(dX/dY)``: zero due +Y of the sensor, pi/2 due +X.

    Returns shape ``(..., M)`` for a batch of states against ``M`` sensors,
    squeezed to a scalar for a single state and a single ``(2,)`` sensor.
    """
    dx, dy = _offsets(state, np.atleast_2d(sensor))
    if np.any((dx == 0.0) & (dy == 0.0)):
        raise CoincidentPositionError("target coincides with sensor position")
    out = np.arctan2(dx, dy)
    return out[..., 0] if np.ndim(sensor) == 1 else out


def bearing_gradient(state, sensor) -> np.ndarray:
    """Gradient of :func:`bearing` w.r.t. the full state, shape ``(..., M, n_x)``."""
    state = np.asarray(state, dtype=float)
    dx, dy = _offsets(state, np.atleast_2d(sensor))
    d2 = dx**2 + dy**2
    if np.any(d2 == 0.0):
        raise CoincidentPositionError("target coincides with sensor position")
    grad = np.zeros(dx.shape + (state.shape[-1],))
    grad[..., POSITION_INDICES[0]] = dy / d2
    grad[..., POSITION_INDICES[1]] = -dx / d2
    return grad[..., 0, :] if np.ndim(sensor) == 1 else grad


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


@dataclass(frozen=True)
class BearingObsModel:
    """Bearing sensor with noise variance ``max(r_min, r0 (1 + (d/d0)^2))``."""

    r0: float = 6.25e-4
    d0: float = 500.0
    r_min: float = 1e-6
    period: ClassVar[float | None] = 2.0 * np.pi

    def __post_init__(self):
        if min(self.r0, self.d0, self.r_min) <= 0:
            raise ValueError("r0, d0 and r_min must all be positive")

    def variance(self, states, sensors) -> np.ndarray:
        dx, dy = _offsets(states, np.atleast_2d(sensors))
        r = np.maximum(self.r_min, self.r0 * (1.0 + (dx**2 + dy**2) / self.d0**2))
        return r[..., 0] if np.ndim(sensors) == 1 else r

    def evaluate(self, states, sensors):
        """Predicted bearing, its state gradient and noise variance for each (state, sensor)."""
        sensors = np.atleast_2d(sensors)
        return bearing(states, sensors), bearing_gradient(states, sensors), self.variance(states, sensors)

    def sample(self, state, sensors, rng: np.random.Generator) -> np.ndarray:
        """Noisy bearings at a single true state, wrapped into (-pi, pi]."""
        g, _, r = self.evaluate(state, sensors)
        return wrap_angle(g + np.sqrt(r) * rng.standard_normal(g.shape))


@dataclass(frozen=True)
class LinearObsModel:
    """Scalar linear sensors ``z_m = h_m . x + noise`` with constant variance ``r``.

    ``sensors`` passed to :meth:`evaluate` is the ``(M, n_x)`` stack of rows ``h_m``.
    Used as a test model and by the linear-Gaussian oracles.
    """

    r: float = 1.0
    period: ClassVar[float | None] = None

    def evaluate(self, states, sensors):
        states = np.asarray(states, dtype=float)
        H = np.atleast_2d(np.asarray(sensors, dtype=float))
        g = states @ H.T
        grad = np.broadcast_to(H, g.shape + (H.shape[1],)).copy()
        return g, grad, np.full(g.shape, float(self.r))

    def variance(self, states, sensors):
        return self.evaluate(states, sensors)[2]

    def sample(self, state, sensors, rng):
        g, _, r = self.evaluate(state, sensors)
        return g + np.sqrt(r) * rng.standard_normal(g.shape)


def obs_noise_variance(state, sensor, model: BearingObsModel):
    return model.variance(state, sensor)
