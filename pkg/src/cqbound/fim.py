"""Fisher-information recursions for the local and global conditional bounds.

A single Schur-complement update serves every recursion in the package::

    L(k+1) = (b22 + J) - b21 (L(k) + b11)^-1 b12

with ``J`` the observation information (raw, quantized, or zero for the
predictive FIM).  The global FIM uses the same form with C-blocks whose
lower-right block is assembled from network sums of local FIMs.

Expectations over transition and likelihood Hessians are Monte-Carlo
averages over weighted particles of the analytic Gaussian inner forms.
Particle arguments are anything with ``states`` ``(N, n_x)`` and
``weights`` ``(N,)`` attributes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import SingularMatrixError
from .quantizer import PROB_FLOOR, PROB_NEGLIGIBLE, QuantizerSpec
from .state_space import POSITION_INDICES

MAX_CONDITION = 1e12


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def is_valid_fim(m: np.ndarray, rtol: float = 1e-10) -> bool:
    """Symmetric to ``rtol`` and PSD up to ``-1e-9 * trace``."""
    m = np.asarray(m, dtype=float)
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > rtol * scale:
        return False
    return np.linalg.eigvalsh(symmetrize(m)).min() >= -1e-9 * abs(np.trace(m))


@dataclass(frozen=True)
class BBlocks:
    b11: np.ndarray
    b12: np.ndarray
    b22: np.ndarray

    @property
    def b21(self) -> np.ndarray:
        return self.b12.T


@dataclass(frozen=True)
class CBlocks:
    c11: np.ndarray
    c12: np.ndarray
    c22: np.ndarray

    @property
    def c21(self) -> np.ndarray:
        return self.c12.T


def _checked_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(a)
    if not np.all(np.isfinite(a)) or np.linalg.cond(a) > MAX_CONDITION:
        raise SingularMatrixError("block to invert is singular or ill-conditioned")
    return np.linalg.solve(a, b)


def schur_lower_right(a11, a12, a21, a22) -> np.ndarray:
    """``a22 - a21 a11^-1 a12``: the inverse of the lower-right block of the block inverse."""
    a11, a12, a21, a22 = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (a11, a12, a21, a22))
    return a22 - a21 @ _checked_solve(a11, a12)


def _particle_arrays(particles):
    states = np.atleast_2d(np.asarray(particles.states, dtype=float))
    weights = np.asarray(particles.weights, dtype=float)
    if states.shape[0] == 0:
        raise ValueError("empty particle set")
    return states, weights / weights.sum()


def b_blocks_state(particles, model) -> BBlocks:
    """Transition-only B-blocks; ``b22`` is the predictive block ``Q^-1``."""
    states, w = _particle_arrays(particles)
    Fs = model.jacobian(states)
    Qi = model.Q_inv
    n = Qi.shape[0]
    QF = np.matmul(Qi, Fs)
    b11 = (Fs * w[:, None, None]).reshape(-1, n).T @ QF.reshape(-1, n)
    F_mean = np.tensordot(w, Fs, axes=1)
    b12 = -F_mean.T @ Qi
    return BBlocks(symmetrize(b11), b12, symmetrize(Qi))


def c_blocks(global_particles, model, c22: np.ndarray) -> CBlocks:
    """Global C-blocks: transition terms on the global particles, ``c22`` from the network sums."""
    b = b_blocks_state(global_particles, model)
    return CBlocks(b.b11, b.b12, symmetrize(np.asarray(c22, dtype=float)))


def assemble_c22(sum_filtering, sum_predictive, transition_info) -> np.ndarray:
    """Lower-right global block: sum of local filtering FIMs minus predictive ones, plus ``Q^-1``."""
    return symmetrize(np.asarray(sum_filtering) - np.asarray(sum_predictive) + transition_info)


def _weighted_outer(grad, c):
    # sum_{i,m} c_im grad_im grad_im^T
    n = grad.shape[-1]
    return symmetrize((grad * c[..., None]).reshape(-1, n).T @ grad.reshape(-1, n))


def j_raw(particles, sensors, obs_model) -> np.ndarray:
    """Gaussian raw-observation information ``sum_m grad g_m grad g_m^T / r_m``, particle-averaged."""
    states, w = _particle_arrays(particles)
    sensors = np.atleast_2d(sensors)
    if sensors.shape[0] == 0:
        return np.zeros((states.shape[1],) * 2)
    _, grad, r = obs_model.evaluate(states, sensors)
    return _weighted_outer(grad, w[:, None] / r)


# cells lying wholly beyond this many sd from g have mass below 1e-12 and are
# zeroed by the PROB_NEGLIGIBLE rule anyway, so only a window is evaluated
WINDOW_SD = 7.2


def _window_factor(g, sd, spec, width):
    t = spec.thresholds
    first = np.searchsorted(t, g - WINDOW_SD * sd, side="right")
    start = np.clip(first, 0, spec.n_levels - width)
    e = spec.edges[start[:, None] + np.arange(width + 1)]
    u = (e - g[:, None]) / sd[:, None]
    # one tail evaluation gives both cdf and sf without cancellation
    tail = ndtr(-np.abs(u))
    ulo, uhi, tlo, thi = u[:, :-1], u[:, 1:], tail[:, :-1], tail[:, 1:]
    h = np.where(ulo > 0, tlo - thi, np.where(uhi < 0, thi - tlo, 1.0 - tlo - thi))
    phi = np.exp(-0.5 * u * u) * (1.0 / np.sqrt(2.0 * np.pi))
    coef = (phi[:, :-1] - phi[:, 1:]) / sd[:, None]
    terms = np.where(h >= PROB_NEGLIGIBLE, coef**2 / np.maximum(h, PROB_FLOOR), 0.0)
    return terms.sum(axis=-1)


def quantized_info_factor(g, r, spec: QuantizerSpec) -> np.ndarray:
    """``sum_levels (dh/dg)^2 / h``: the scalar information one quantized reading carries about ``g``.

    Only the cells within ``WINDOW_SD`` standard deviations of ``g`` are
    summed; readings are bucketed by window width to keep the arrays dense.
    """
    g = np.asarray(g, dtype=float)
    r = np.broadcast_to(np.asarray(r, dtype=float), g.shape)
    if np.any(r <= 0):
        raise ValueError("observation variance must be positive")
    shape = g.shape
    g, sd = g.reshape(-1), np.sqrt(r).reshape(-1)
    t = spec.thresholds
    widths = (np.searchsorted(t, g + WINDOW_SD * sd, side="right")
              - np.searchsorted(t, g - WINDOW_SD * sd, side="right") + 1)
    out = np.empty(g.size)
    order = np.argsort(widths, kind="stable")
    for chunk in np.array_split(order, max(1, min(4, g.size // 256))):
        if chunk.size:
            out[chunk] = _window_factor(g[chunk], sd[chunk], spec, int(widths[chunk].max()))
    return out.reshape(shape)


def j_quantized(particles, sensors, obs_model, spec: QuantizerSpec) -> np.ndarray:
    """Score-variance information of quantized readings, summed over sensors and all levels."""
    states, w = _particle_arrays(particles)
    sensors = np.atleast_2d(sensors)
    if sensors.shape[0] == 0:
        return np.zeros((states.shape[1],) * 2)
    g, grad, r = obs_model.evaluate(states, sensors)
    return _weighted_outer(grad, w[:, None] * quantized_info_factor(g, r, spec))


def local_fim_update(L_k, blocks: BBlocks, j_obs=None) -> np.ndarray:
    """One step of the local recursion; ``j_obs=None`` gives the predictive FIM."""
    b22 = blocks.b22 if j_obs is None else blocks.b22 + j_obs
    out = schur_lower_right(np.asarray(L_k) + blocks.b11, blocks.b12, blocks.b21, b22)
    return symmetrize(out)


def global_fusion(G_k, c: CBlocks) -> np.ndarray:
    out = schur_lower_right(np.asarray(G_k) + c.c11, c.c12, c.c21, c.c22)
    return symmetrize(out)


def rmse_bound(fim, position_indices=POSITION_INDICES) -> float:
    """Square root of the position trace of ``fim^-1`` (metres for the tracking scenario)."""
    fim = np.atleast_2d(np.asarray(fim, dtype=float))
    cov = _checked_solve(fim, np.eye(fim.shape[0]))
    idx = list(position_indices)
    return float(np.sqrt(np.trace(cov[np.ix_(idx, idx)])))


def position_variance(fim, position_indices=POSITION_INDICES) -> float:
    """Position trace of ``fim^-1``; averaged across trials before taking the root."""
    return rmse_bound(fim, position_indices) ** 2
