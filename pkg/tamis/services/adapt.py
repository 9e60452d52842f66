"""Proposal update: resample by the anti-truncated tempered weights, then EM.

EM runs on the resampled, unweighted points and starts from the current
proposal θ_t, so a few steps move the mixture toward the temporary target
without refitting it from scratch.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from ..exceptions import ContractViolation
from ..models.mixture import MixtureParams

logger = logging.getLogger(__name__)

EM_MAX_STEPS = 10
EM_REL_TOL = 1e-6
DEGENERATE_MASS = 1e-6


@dataclass(frozen=True)
class ResampleSpec:
    size: int
    scheme: str = 'systematic'

    def __post_init__(self):
        if self.size < 1:
            raise ContractViolation(f"resample size must be >= 1, got {self.size}")
        if self.scheme not in ('systematic', 'multinomial', 'residual'):
            raise ContractViolation(f"unknown resampling scheme '{self.scheme}'")


def _systematic(probabilities: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    cumulative = np.cumsum(probabilities)
    positions = (rng.uniform() + np.arange(size)) / size * cumulative[-1]
    indices = np.searchsorted(cumulative, positions, side='right')
    # a position rounded up onto the total would run past the last positive weight
    return np.minimum(indices, np.flatnonzero(probabilities)[-1])


def _residual(probabilities: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    expected = size * probabilities
    copies = np.floor(expected).astype(int)
    indices = np.repeat(np.arange(probabilities.size), copies)
    remaining = size - indices.size
    if remaining > 0:
        leftover = expected - copies
        extra = rng.choice(probabilities.size, size=remaining, p=leftover / leftover.sum())
        indices = np.concatenate([indices, extra])
    return np.sort(indices)


def resample(log_w_hat, spec: ResampleSpec, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``spec.size`` particles drawn in proportion to exp(log_w_hat)"""
    log_w_hat = np.asarray(log_w_hat, dtype=float)
    if np.any(np.isnan(log_w_hat)) or not np.any(np.isfinite(log_w_hat)):
        raise ContractViolation("resampling needs at least one finite weight and no NaN")
    probabilities = softmax(log_w_hat)

    if spec.scheme == 'systematic':
        return _systematic(probabilities, spec.size, rng)
    if spec.scheme == 'residual':
        return _residual(probabilities, spec.size, rng)
    return rng.choice(probabilities.size, size=spec.size, p=probabilities)


def mean_log_likelihood(theta: MixtureParams, data) -> float:
    return float(np.mean(theta.log_density(data)))


def em_step(theta: MixtureParams, data: np.ndarray) -> MixtureParams:
    """One EM iteration for a diagonal-covariance Gaussian mixture.

    A component whose responsibility mass falls below K·1e-6 of the data
    keeps its previous mean, variances and weight for this step.
    """
    data = np.asarray(data, dtype=float)
    n, k = data.shape[0], theta.n_components
    log_joint = theta.component_log_densities(data)
    responsibilities = np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))
    mass = responsibilities.sum(axis=0)

    weights = theta.weights.copy()
    means = theta.means.copy()
    variances = theta.variances.copy()
    active = mass >= k * DEGENERATE_MASS * n
    if not np.all(active):
        logger.debug("freezing %d degenerate component(s)", int(np.count_nonzero(~active)))

    for j in np.flatnonzero(active):
        r = responsibilities[:, j]
        means[j] = r @ data / mass[j]
        variances[j] = r @ (data - means[j]) ** 2 / mass[j]
        weights[j] = mass[j] / n
    if np.any(~active):
        # frozen weights keep their share of what the active ones leave
        free = 1.0 - weights[active].sum()
        frozen = theta.weights[~active]
        weights[~active] = frozen / frozen.sum() * max(free, 0.0)

    # a component holding a single point has zero variance before the floor
    variances = np.maximum(variances, theta.variance_floor)
    return MixtureParams(weights=weights, means=means, variances=variances,
                         variance_floor=theta.variance_floor)


def em_fit(theta_init: MixtureParams, data, max_steps: int = EM_MAX_STEPS,
           rel_tol: float = EM_REL_TOL) -> MixtureParams:
    """Run EM from ``theta_init`` until ``max_steps`` or a relative gain below ``rel_tol``"""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != theta_init.dim:
        raise ContractViolation(f"EM data of shape {data.shape} does not match dimension {theta_init.dim}")
    if data.shape[0] < 2:
        raise ContractViolation("EM needs at least two data points")

    theta = theta_init
    previous = mean_log_likelihood(theta, data)
    for step in range(1, max_steps + 1):
        theta = em_step(theta, data)
        current = mean_log_likelihood(theta, data)
        logger.debug("EM step %d: mean log-likelihood %.10g", step, current)
        if abs(current - previous) <= rel_tol * abs(previous):
            break
        previous = current
    return theta
