"""Reference filters: exact Kalman filter and the bootstrap particle filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import DegenerateEnsembleError


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def point(cls, x0) -> "GaussianBelief":
        x0 = np.asarray(x0, dtype=float)
        return cls(x0, np.zeros((len(x0), len(x0))))


def kalman_step(belief: GaussianBelief, y, model) -> GaussianBelief:
    """One predict/update cycle for ``x_t = alpha x_{t-1} + v``, ``y = x_t + w``.

    Uses the Joseph form so the covariance stays symmetric positive
    semidefinite over long runs.
    """
    d = len(belief.mean)
    eye = np.eye(d)
    m_pred = model.alpha * belief.mean
    P_pred = model.alpha**2 * belief.cov + model.cov
    R = model.obs_var * eye
    S = P_pred + R
    # K = P_pred S^{-1}, S symmetric
    K = linalg.solve(S, P_pred, assume_a="pos").T
    mean = m_pred + K @ (np.asarray(y) - m_pred)
    IK = eye - K
    cov = IK @ P_pred @ IK.T + K @ R @ K.T
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def kalman_filter(model, observations) -> tuple[np.ndarray, list[GaussianBelief]]:
    """Filtered means for every observation, starting from the known ``x0``."""
    belief = GaussianBelief.point(model.x0)
    beliefs = []
    for y in observations:
        belief = kalman_step(belief, y, model)
        beliefs.append(belief)
    return np.array([b.mean for b in beliefs]), beliefs


@dataclass
class WeightedEnsemble:
    particles: np.ndarray
    log_weights: np.ndarray

    @classmethod
    def uniform(cls, particles) -> "WeightedEnsemble":
        particles = np.asarray(particles, dtype=float)
        return cls(particles, np.full(len(particles), -np.log(len(particles))))

    def normalized_weights(self) -> np.ndarray:
        lse = logsumexp(self.log_weights)
        if not np.isfinite(lse):
            raise DegenerateEnsembleError("all particle weights are zero")
        return np.exp(self.log_weights - lse)

    def mean(self) -> np.ndarray:
        return self.normalized_weights() @ self.particles


def effective_sample_size(log_weights) -> float:
    lw = np.asarray(log_weights, dtype=float)
    lse = logsumexp(lw)
    if not np.isfinite(lse):
        raise DegenerateEnsembleError("all particle weights are zero")
    w = np.exp(lw - lse)
    return 1.0 / np.sum(w * w)


def systematic_resample(weights, rng, n=None) -> np.ndarray:
    """Indices drawn by systematic resampling; ``weights`` must sum to one."""
    weights = np.asarray(weights, dtype=float)
    n = len(weights) if n is None else n
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right").clip(max=len(weights) - 1)


def propagate_and_weight(ens: WeightedEnsemble, y, model, rng) -> WeightedEnsemble:
    """Move particles through the transition and fold in the likelihood (normalized)."""
    particles = model.transition_sample(ens.particles, rng)
    log_w = ens.log_weights + model.observation_logpdf(y, particles)
    log_w = np.where(np.isnan(log_w), -np.inf, log_w)
    lse = logsumexp(log_w)
    if not np.isfinite(lse):
        raise DegenerateEnsembleError("all particle weights vanished")
    return WeightedEnsemble(particles, log_w - lse)


def resample_if_degenerate(ens: WeightedEnsemble, rng, threshold: float = 0.5):
    ess = effective_sample_size(ens.log_weights)
    if ess < threshold * len(ens.particles):
        idx = systematic_resample(np.exp(ens.log_weights), rng)
        return WeightedEnsemble.uniform(ens.particles[idx]), ess
    return ens, ess


def bootstrap_pf_step(ens: WeightedEnsemble, y, model, rng, threshold: float = 0.5):
    """Propagate, reweight by the likelihood, resample when ESS < threshold * N.

    Returns:
        ``(ensemble, ess)`` with ``ess`` measured before resampling.
    """
    if len(ens.particles) < 2:
        raise ValueError("bootstrap filter needs at least two particles")
    return resample_if_degenerate(propagate_and_weight(ens, y, model, rng), rng, threshold)


def bootstrap_filter(model, observations, n_particles: int, rng):
    """Run the bootstrap filter from the known initial state.

    Returns:
        ``(means, ess)``; means are read from the weighted ensemble before
        resampling.
    """
    if n_particles < 2:
        raise ValueError("bootstrap filter needs at least two particles")
    ens = WeightedEnsemble.uniform(np.repeat(model.x0[None, :], n_particles, axis=0))
    means, ess_trace = [], []
    for y in observations:
        weighted = propagate_and_weight(ens, y, model, rng)
        means.append(weighted.mean())
        ens, ess = resample_if_degenerate(weighted, rng)
        ess_trace.append(ess)
    return np.array(means), np.array(ess_trace)
