"""Scalar N_L-bit quantizer and its level likelihoods under Gaussian noise.

Levels are indexed ``0 .. n_levels - 1``; level ``i`` is the cell
``[q_i, q_{i+1})`` of the extended threshold sequence
``(-inf, t_1, ..., t_{n_levels-1}, +inf)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# cells below this probability contribute no score term
PROB_NEGLIGIBLE = 1e-12
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class QuantizerSpec:
    thresholds: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float).reshape(-1)
        if not np.all(np.isfinite(t)):
            raise ValueError("quantizer thresholds must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("quantizer thresholds must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "thresholds", t)

    @property
    def n_levels(self) -> int:
        return self.thresholds.size + 1

    @property
    def bits(self) -> int:
        return int(math.ceil(math.log2(self.n_levels)))

    @property
    def edges(self) -> np.ndarray:
        """The extended threshold sequence, length ``n_levels + 1``."""
        return np.concatenate(([-np.inf], self.thresholds, [np.inf]))


def make_uniform(bits: int, lo: float, hi: float) -> QuantizerSpec:
    """``2**bits - 1`` equally spaced thresholds strictly inside ``(lo, hi)``."""
    if bits < 1 or int(bits) != bits:
        raise ValueError(f"bits must be a positive integer, got {bits}")
    if not lo < hi:
        raise ValueError(f"empty quantizer range [{lo}, {hi}]")
    n = 2 ** int(bits)
    return QuantizerSpec(lo + (hi - lo) * np.arange(1, n) / n)


def quantize(raw, spec: QuantizerSpec):
    """Level index of each raw value (``q_i <= raw < q_{i+1}``)."""
    levels = np.searchsorted(spec.thresholds, raw, side="right")
    return int(levels) if np.ndim(levels) == 0 else levels


def _standardized_edges(g, r, spec):
    g = np.asarray(g, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("observation variance must be positive")
    sd = np.sqrt(r)[..., None]
    e = spec.edges
    lo = (e[:-1] - g[..., None]) / sd
    hi = (e[1:] - g[..., None]) / sd
    return lo, hi, sd


def _cell_mass(lo, hi):
    # upper-tail cells via the survival function to avoid cancellation
    upper = lo > 0
    return np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


def level_probs(g, r, spec: QuantizerSpec) -> np.ndarray:
    """Probability of each level given predicted observation ``g`` and variance ``r``.

    Broadcasts over ``g`` and ``r``; the level axis is appended last.
    """
    lo, hi, _ = _standardized_edges(g, r, spec)
    return _cell_mass(lo, hi)


def _phi(u):
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def level_grad_coefficients(g, r, spec: QuantizerSpec):
    """``dh_i/dg`` for every level, plus the level probabilities themselves.

    The state gradient of ``h_i`` is this coefficient times the gradient of
    ``g``; the variance is held fixed.
    """
    lo, hi, sd = _standardized_edges(g, r, spec)
    coef = (_phi(lo) - _phi(hi)) / sd
    return coef, _cell_mass(lo, hi)


def level_prob_grads(state, sensor, obs_model, spec: QuantizerSpec) -> np.ndarray:
    """Jacobian of the level probabilities w.r.t. the state.

    For one state and one sensor the result has shape ``(n_levels, n_x)``;
    batches give ``(N, M, n_levels, n_x)``.
    """
    single = np.ndim(state) == 1 and np.ndim(sensor) <= 1
    g, grad, r = obs_model.evaluate(np.atleast_2d(state), np.atleast_2d(sensor))
    coef, _ = level_grad_coefficients(g, r, spec)
    out = coef[..., :, None] * grad[..., None, :]
    return out[0, 0] if single else out


def sample_levels(g, r, spec: QuantizerSpec, rng: np.random.Generator, size=None):
    """Draw quantized observations of ``g + N(0, r)``."""
    raw = np.asarray(g) + np.sqrt(r) * rng.standard_normal(size if size is not None else np.shape(g))
    return quantize(raw, spec)


def observed_level_prob(g, r, levels, spec: QuantizerSpec) -> np.ndarray:
    """Probability of the observed level only; ``levels`` broadcasts against ``g``."""
    g = np.asarray(g, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("observation variance must be positive")
    e = spec.edges
    levels = np.asarray(levels)
    sd = np.sqrt(r)
    return _cell_mass((e[levels] - g) / sd, (e[levels + 1] - g) / sd)


def level_reference(levels, spec: QuantizerSpec) -> np.ndarray:
    """A representative raw value inside each observed cell (finite edge for the outer cells)."""
    t = spec.thresholds
    levels = np.asarray(levels)
    if t.size == 0:
        return np.zeros(levels.shape)
    lo = t[np.clip(levels - 1, 0, t.size - 1)]
    hi = t[np.clip(levels, 0, t.size - 1)]
    return 0.5 * (lo + hi)
