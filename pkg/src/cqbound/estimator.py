"""Particle filtering on quantized (or raw) observations and Gaussian fusion of local posteriors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .consensus import ConsensusConfig, average_consensus
from .errors import FilterDivergence, FusionError
from .quantizer import QuantizerSpec, level_reference, observed_level_prob
from .state_space import wrap_angle

COV_FLOOR = 1e-12


@dataclass(frozen=True)
class ParticleSet:
    states: np.ndarray   # (N, n_x)
    weights: np.ndarray  # (N,), normalized

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if states.shape[0] != w.size or w.size == 0:
            raise ValueError("need one weight per particle and at least one particle")
        if np.any(w < 0):
            raise ValueError("particle weights must be non-negative")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def _normalized(cls, states, weights) -> "ParticleSet":
        # weights already normalized: keep them bit-identical
        out = object.__new__(cls)
        object.__setattr__(out, "states", states)
        object.__setattr__(out, "weights", weights)
        return out

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def ess(self) -> float:
        return 1.0 / np.sum(self.weights**2)

    @classmethod
    def uniform(cls, states) -> "ParticleSet":
        states = np.atleast_2d(states)
        return cls(states, np.full(states.shape[0], 1.0 / states.shape[0]))

    @classmethod
    def from_gaussian(cls, mean, cov, n: int, rng: np.random.Generator) -> "ParticleSet":
        return cls.uniform(rng.multivariate_normal(np.asarray(mean, float), np.asarray(cov, float), size=n,
                                                   method="cholesky"))


@dataclass(frozen=True)
class GaussApprox:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def information(self) -> np.ndarray:
        return np.linalg.inv(self.cov)

    @property
    def info_vector(self) -> np.ndarray:
        return np.linalg.solve(self.cov, self.mean)


def predict(particles: ParticleSet, model, rng: np.random.Generator) -> ParticleSet:
    states = model.propagate(particles.states) + model.sample_noise(rng, particles.n)
    return ParticleSet._normalized(states, particles.weights)


def _aligned(g, ref, obs_model):
    # bring periodic predictions onto the branch nearest the observation
    period = getattr(obs_model, "period", None)
    if period is None:
        return g
    return ref + wrap_angle(g - ref)


def _reweight(particles: ParticleSet, loglik: np.ndarray) -> ParticleSet:
    # log domain, so sharp likelihoods only fail when every weight is exactly zero
    with np.errstate(divide="ignore"):
        logw = np.log(particles.weights) + loglik
    if not np.any(np.isfinite(logw)):
        raise FilterDivergence("every particle weight is zero")
    logw = np.where(np.isnan(logw), -np.inf, logw)
    return ParticleSet(particles.states, np.exp(logw - logsumexp(logw)))


def weight_quantized(particles: ParticleSet, levels, sensors, obs_model, spec: QuantizerSpec) -> ParticleSet:
    """Multiply weights by the product over sensors of the observed-level probabilities."""
    levels = np.asarray(levels, dtype=int).reshape(-1)
    sensors = np.atleast_2d(sensors)
    if levels.size != sensors.shape[0]:
        raise ValueError("need exactly one observed level per active sensor")
    if levels.size == 0:
        return particles
    g, _, r = obs_model.evaluate(particles.states, sensors)
    g = _aligned(g, level_reference(levels, spec), obs_model)
    h = observed_level_prob(g, r, levels[None, :], spec)
    with np.errstate(divide="ignore"):
        return _reweight(particles, np.log(h).sum(axis=1))


def weight_raw(particles: ParticleSet, z, sensors, obs_model) -> ParticleSet:
    """Gaussian raw-observation update."""
    z = np.asarray(z, dtype=float).reshape(-1)
    sensors = np.atleast_2d(sensors)
    if z.size == 0:
        return particles
    g, _, r = obs_model.evaluate(particles.states, sensors)
    innov = z - g
    if getattr(obs_model, "period", None) is not None:
        innov = wrap_angle(innov)
    loglik = -0.5 * (innov**2 / r + np.log(2.0 * np.pi * r))
    return _reweight(particles, loglik.sum(axis=1))


def systematic_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right")


def resample_systematic(particles: ParticleSet, rng: np.random.Generator,
                        ess_threshold: float = 0.5) -> ParticleSet:
    """Systematic resampling when ESS falls below ``ess_threshold * N``."""
    if particles.ess >= ess_threshold * particles.n:
        return particles
    idx = systematic_indices(particles.weights, rng)
    return ParticleSet.uniform(particles.states[idx])


def gauss_approx(particles: ParticleSet, floor: float = COV_FLOOR) -> GaussApprox:
    """Weighted mean and covariance, with eigenvalues floored at ``floor``."""
    if particles.n < 2:
        raise ValueError("need at least two particles for a covariance")
    w = particles.weights
    mean = w @ particles.states
    d = particles.states - mean
    cov = (d * w[:, None]).T @ d
    cov = 0.5 * (cov + cov.T)
    if floor > 0:
        vals, vecs = np.linalg.eigh(cov)
        if vals.min() < floor:
            cov = (vecs * np.maximum(vals, floor)) @ vecs.T
    return GaussApprox(mean, cov)


def fuse_gaussians(locals_, prior: GaussApprox, adjacency, config: ConsensusConfig = ConsensusConfig(),
                   local_priors=None, reference_node: int = 0):
    """Information-form fusion of per-node Gaussian posteriors.

    Each node contributes its information gain over its own prior; the
    network sums come from average consensus scaled by the node count::

        Lambda_G = Lambda_prior + sum_l (Lambda_l - Lambda_prior_l)
        eta_G    = eta_prior    + sum_l (eta_l    - eta_prior_l)

    With every ``local_priors[l]`` equal to ``prior`` (the default) this is
    ``sum_l Lambda_l - (N_f - 1) Lambda_prior``.  Returns the fused
    Gaussian and the number of consensus rounds used.
    """
    n_f = len(locals_)
    if local_priors is None:
        local_priors = [prior] * n_f
    if len(local_priors) != n_f:
        raise ValueError("need one local prior per node")
    n = prior.mean.size
    payload = np.empty((n_f, n, n + 1))
    for l, (post, lp) in enumerate(zip(locals_, local_priors)):
        payload[l, :, :n] = post.information - lp.information
        payload[l, :, n] = post.info_vector - lp.info_vector
    est, rounds = average_consensus(payload, adjacency, config, return_rounds=True)
    sums = n_f * est[reference_node]

    info = prior.information + sums[:, :n]
    info = 0.5 * (info + info.T)
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError as exc:
        raise FusionError("fused information matrix is not positive definite") from exc
    eye = np.eye(n)
    chol_inv = np.linalg.solve(chol, eye)
    cov = chol_inv.T @ chol_inv
    mean = cov @ (prior.info_vector + sums[:, n])
    return GaussApprox(mean, 0.5 * (cov + cov.T)), rounds


def fuse_locals(locals_, prior: GaussApprox, adjacency, config: ConsensusConfig, rng: np.random.Generator,
                n_particles: int, local_priors=None) -> ParticleSet:
    """Fuse local posteriors and draw global particles from the fused Gaussian."""
    fused, _ = fuse_gaussians(locals_, prior, adjacency, config, local_priors)
    return ParticleSet.from_gaussian(fused.mean, fused.cov, n_particles, rng)
