"""Diagonal-covariance Gaussian mixtures used as importance proposals.

A mixture with K components in dimension d is held in :class:`MixtureParams`
as three arrays: ``weights`` (K,), ``means`` (K, d) and ``variances`` (K, d).
Instances are immutable: the arrays are copied and marked read-only, so one
parameter set can be shared across threads and stored in stage records.

Random streams
--------------
Sampling consumes a ``numpy.random.Generator``. One generator drives one
logical sequence of draws. Independent sub-streams for parallel work are
derived with :func:`spawn_generators`, which splits a root seed through
``numpy.random.SeedSequence.spawn``: stream ``i`` depends only on the root
seed and ``i``, never on the order in which workers start.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import logsumexp

from ..exceptions import ContractViolation

logger = logging.getLogger(__name__)

VARIANCE_FLOOR_SCALE = 1e-10
WEIGHT_FLOOR = 1e-8
LOG_2PI = math.log(2.0 * math.pi)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Parameters θ = (weights, means, variances) of a Gaussian mixture.

    ``variance_floor`` defaults to 1e-10 times the mean of the variances the
    mixture was first built with; refits pass it along so the floor stays
    tied to the initial scale. Weights below 1e-8 are raised to 1e-8 and the
    vector is renormalized.
    """
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    variance_floor: Optional[float] = None

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        means = np.asarray(self.means, dtype=float)
        variances = np.asarray(self.variances, dtype=float)
        if means.ndim == 1:
            means = means[np.newaxis, :]
        if variances.ndim == 1:
            variances = variances[np.newaxis, :]

        if weights.ndim != 1 or means.ndim != 2 or variances.ndim != 2:
            raise ContractViolation("weights must be (K,), means and variances (K, d)")
        if not (weights.shape[0] == means.shape[0] == variances.shape[0]):
            raise ContractViolation(
                f"component count mismatch: {weights.shape[0]} weights, "
                f"{means.shape[0]} means, {variances.shape[0]} variance rows"
            )
        if means.shape != variances.shape:
            raise ContractViolation(
                f"means {means.shape} and variances {variances.shape} differ in dimension"
            )
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means))
                and np.all(np.isfinite(variances))):
            raise ContractViolation("mixture parameters must be finite")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ContractViolation("mixture weights must be non-negative with positive sum")
        if np.any(variances <= 0):
            raise ContractViolation("variances must be strictly positive")

        floor = self.variance_floor
        if floor is None:
            floor = VARIANCE_FLOOR_SCALE * float(np.mean(variances))

        weights = weights / weights.sum()
        weights = np.maximum(weights, WEIGHT_FLOOR)
        weights = weights / weights.sum()

        object.__setattr__(self, 'weights', _frozen(weights))
        object.__setattr__(self, 'means', _frozen(means))
        object.__setattr__(self, 'variances', _frozen(np.maximum(variances, floor)))
        object.__setattr__(self, 'variance_floor', float(floor))

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _as_points(self, x) -> np.ndarray:
        points = np.asarray(x, dtype=float)
        if points.ndim == 1:
            points = points[np.newaxis, :]
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ContractViolation(
                f"points of shape {np.shape(x)} do not match mixture dimension {self.dim}"
            )
        return points

    def component_log_densities(self, x) -> np.ndarray:
        """log 𝔭_k + log φ(x | μ_k, Σ_k) for every point and component, shape (N, K).

        Differences to each mean are formed before squaring so the result is
        invariant to a common translation of points and means.
        """
        points = self._as_points(x)
        out = np.empty((points.shape[0], self.n_components))
        log_norm = -0.5 * (self.dim * LOG_2PI + np.sum(np.log(self.variances), axis=1))
        for k in range(self.n_components):
            diff = points - self.means[k]
            out[:, k] = (math.log(self.weights[k]) + log_norm[k]
                         - 0.5 * np.sum(diff * diff / self.variances[k], axis=1))
        return out

    def log_density(self, x) -> np.ndarray:
        """log q(x | θ) for a batch of points, shape (N,)"""
        return logsumexp(self.component_log_densities(x), axis=1)

    def sample(self, n: int, rng: np.random.Generator, stage: int = 0) -> 'SampleBatch':
        """Draw ``n`` i.i.d. points: a component from Categorical(weights), then Gaussian noise"""
        if n < 1:
            raise ContractViolation(f"sample size must be >= 1, got {n}")
        components = rng.choice(self.n_components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        points = self.means[components] + np.sqrt(self.variances[components]) * noise
        return SampleBatch(points=points, source_stage=stage, components=components)

    def to_record(self) -> Dict[str, Any]:
        """Structured text record with every float written to 17 significant digits"""
        def fmt(values):
            return [format(float(v), '.17g') for v in values]

        return {
            'K': self.n_components,
            'd': self.dim,
            'weights': fmt(self.weights),
            'means': [fmt(row) for row in self.means],
            'variances': [fmt(row) for row in self.variances],
            'variance_floor': format(self.variance_floor, '.17g'),
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> 'MixtureParams':
        try:
            params = cls(
                weights=[float(v) for v in record['weights']],
                means=[[float(v) for v in row] for row in record['means']],
                variances=[[float(v) for v in row] for row in record['variances']],
                variance_floor=float(record['variance_floor']) if 'variance_floor' in record else None,
            )
        except KeyError as exc:
            raise ContractViolation(f"mixture record is missing field {exc}") from exc
        if params.n_components != int(record['K']) or params.dim != int(record['d']):
            raise ContractViolation("mixture record K/d do not match its arrays")
        return params


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """N×d draws from the proposal of stage ``source_stage``"""
    points: np.ndarray
    source_stage: int
    components: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ContractViolation("a sample batch needs at least one row of shape (N, d)")
        if not np.all(np.isfinite(points)):
            raise ContractViolation("sample batch contains non-finite rows")
        object.__setattr__(self, 'points', _frozen(points))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def mixture_log_density(theta: MixtureParams, x) -> float:
    """log q(x | θ) for a single d-vector"""
    vector = np.asarray(x, dtype=float)
    if vector.ndim != 1 or vector.shape[0] != theta.dim:
        raise ContractViolation(
            f"expected a vector of dimension {theta.dim}, got shape {vector.shape}"
        )
    return float(theta.log_density(vector)[0])


def mixture_sample(theta: MixtureParams, n: int, rng: np.random.Generator,
                   stage: int = 0) -> SampleBatch:
    return theta.sample(n, rng, stage=stage)


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """Independent generators for ``count`` parallel workers, split from one root seed"""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]
