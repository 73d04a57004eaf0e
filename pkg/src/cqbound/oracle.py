"""Reference computations used to check the FIM recursions.

Nothing here calls into :mod:`cqbound.fim`; the recursions are rebuilt from
the full block-matrix inverse and the information terms from scipy's
normal distribution, so agreement with the fast path is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .quantizer import QuantizerSpec, level_probs, sample_levels


@dataclass(frozen=True)
class LinearGaussianModel:
    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("F", "Q", "H", "R"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))


def kalman_info_recursion(L0, model: LinearGaussianModel, steps: int) -> list[np.ndarray]:
    """``L(k+1) = (Q + F L(k)^-1 F^T)^-1 + H^T R^-1 H`` for ``steps`` steps (``L0`` excluded)."""
    L = np.atleast_2d(np.asarray(L0, dtype=float))
    F, Q, H, R = model.F, model.Q, model.H, model.R
    meas = H.T @ np.linalg.inv(R) @ H
    out = []
    for _ in range(steps):
        try:
            P_pred = Q + F @ np.linalg.inv(L) @ F.T
            L = np.linalg.inv(P_pred) + meas
        except np.linalg.LinAlgError as exc:
            raise ArithmeticError("singular intermediate in Kalman information recursion") from exc
        out.append(0.5 * (L + L.T))
    return out


def _block_inverse_update(L, b11, b12, b22):
    """Invert the assembled two-step information matrix and read off the current-state block."""
    n = L.shape[0]
    full = np.block([[L + b11, b12], [b12.T, b22]])
    cov = np.linalg.inv(full)
    out = np.linalg.inv(cov[n:, n:])
    return 0.5 * (out + out.T)


def _transition_terms(states, weights, model):
    Qi = np.linalg.inv(model.Q)
    b11 = np.zeros_like(Qi)
    F_sum = np.zeros_like(Qi)
    for x, w in zip(states, weights):
        F = np.atleast_2d(model.jacobian(x))
        b11 += w * F.T @ Qi @ F
        F_sum += w * F
    return b11, -F_sum.T @ Qi, Qi


def _raw_information(states, weights, sensors, obs_model):
    n = states.shape[1]
    J = np.zeros((n, n))
    for m in range(len(sensors)):
        g, grad, r = obs_model.evaluate(states, sensors[m:m + 1])
        G = grad[:, 0, :]
        J += (G * (weights / r[:, 0])[:, None]).T @ G
    return J


def _quantized_information(states, weights, sensors, obs_model, spec: QuantizerSpec):
    n = states.shape[1]
    J = np.zeros((n, n))
    edges = spec.edges
    for m in range(len(sensors)):
        g, grad, r = obs_model.evaluate(states, sensors[m:m + 1])
        sd = np.sqrt(r[:, 0])
        a = (edges[None, :-1] - g[:, :1]) / sd[:, None]
        b = (edges[None, 1:] - g[:, :1]) / sd[:, None]
        h = np.where(a > 0, norm.sf(a) - norm.sf(b), norm.cdf(b) - norm.cdf(a))
        dh = (norm.pdf(a) - norm.pdf(b)) / sd[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(h >= 1e-12, dh**2 / h, 0.0).sum(axis=1)
        G = grad[:, 0, :]
        J += (G * (weights * factor)[:, None]).T @ G
    return J


def observation_information(states, weights, sensors, obs_model, spec: QuantizerSpec | None = None):
    """Particle-averaged observation FIM, raw when ``spec`` is None."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    weights = np.asarray(weights, dtype=float) / np.sum(weights)
    sensors = np.atleast_2d(sensors)
    if sensors.shape[0] == 0 or sensors.size == 0:
        return np.zeros((states.shape[1],) * 2)
    if spec is None:
        return _raw_information(states, weights, sensors, obs_model)
    return _quantized_information(states, weights, sensors, obs_model, spec)


def centralized_step(L, particles, particles_pred, sensors, process_model, obs_model,
                     spec: QuantizerSpec | None = None) -> np.ndarray:
    """One centralized conditional-FIM step with all sensors pooled at a single centre."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    b11, b12, Qi = _transition_terms(particles.states, particles.weights / particles.weights.sum(),
                                     process_model)
    J = observation_information(particles_pred.states, particles_pred.weights, sensors, obs_model, spec)
    return _block_inverse_update(L, b11, b12, Qi + J)


def centralized_fim(L0, steps, process_model, obs_model, spec: QuantizerSpec | None = None):
    """Centralized recursion over a sequence of ``(particles, predicted_particles, sensors)`` steps.

    ``spec=None`` selects raw observations.  Returns one FIM per step.
    """
    L = np.atleast_2d(np.asarray(L0, dtype=float))
    out = []
    for particles, particles_pred, sensors in steps:
        L = centralized_step(L, particles, particles_pred, sensors, process_model, obs_model, spec)
        out.append(L)
    return out


def brute_force_score_fim(g, r, spec: QuantizerSpec, x0, n_samples: int, rng: np.random.Generator,
                          fd_step: float = 1e-6):
    """Empirical variance of the quantized-observation score at a fixed state.

    ``g`` maps a state to the predicted observation; ``r`` is the noise
    variance (a number, or a callable evaluated once at ``x0`` and then held
    fixed).  The score of each sampled level is the central finite
    difference of the log level probability.  Returns ``(fim, standard_error)``.
    """
    if n_samples < 10_000:
        raise ValueError("brute-force estimate needs at least 1e4 samples")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    r0 = float(r(x0)) if callable(r) else float(r)
    n = x0.size

    # score table: one row per level
    scores = np.zeros((spec.n_levels, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = fd_step
        with np.errstate(divide="ignore"):
            lp_plus = np.log(level_probs(g(x0 + e), r0, spec))
            lp_minus = np.log(level_probs(g(x0 - e), r0, spec))
        diff = (lp_plus - lp_minus) / (2.0 * fd_step)
        scores[:, j] = np.where(np.isfinite(diff), diff, 0.0)

    levels = sample_levels(np.full(n_samples, g(x0)), r0, spec, rng)
    s = scores[levels]
    outer = s[:, :, None] * s[:, None, :]
    fim = outer.mean(axis=0)
    se = outer.std(axis=0, ddof=1) / np.sqrt(n_samples)
    return fim, se
