"""Importance-weight arithmetic, all of it in log space.

Tempering a weight ``w`` to ``w**beta`` in dimension 1000 over- or
underflows any linear representation, so weights are carried as log values
and every sum goes through ``scipy.special.logsumexp``. Entries equal to
-inf stand for draws where the target density vanishes: they count as zero
weight in sums and ESS, take part in quantiles, and anti-truncation lifts
them to the threshold like any other small weight.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.special import logsumexp

from ..exceptions import ConfigurationError, ContractViolation
from ..models.mixture import MixtureParams, SampleBatch
from .cache_service import ProposalDensityCache

logger = logging.getLogger(__name__)

BISECTION_TOL = 1e-6
BISECTION_MAX_ITER = 100


class LogWeightBatch:
    """Log importance weights of one weighted sample.

    +inf and NaN are rejected; at least one entry must be finite. The
    aggregate log Σw is computed on first use.
    """

    def __init__(self, log_w):
        log_w = np.array(log_w, dtype=float, copy=True).ravel()
        if log_w.size == 0:
            raise ContractViolation("a weight batch needs at least one entry")
        if np.any(np.isnan(log_w)):
            raise ContractViolation(f"NaN log weight at index {int(np.flatnonzero(np.isnan(log_w))[0])}")
        if np.any(log_w == np.inf):
            raise ContractViolation(f"+inf log weight at index {int(np.flatnonzero(log_w == np.inf)[0])}")
        if not np.any(np.isfinite(log_w)):
            raise ContractViolation("every log weight is -inf")
        log_w.flags.writeable = False
        self.log_w = log_w

    def __len__(self):
        return self.log_w.size

    @property
    def size(self) -> int:
        return self.log_w.size

    @cached_property
    def log_sum(self) -> float:
        return float(logsumexp(self.log_w))

    def normalized(self) -> np.ndarray:
        """ω_i = w_i / Σ w"""
        return np.exp(self.log_w - self.log_sum)

    def scaled(self, beta: float) -> np.ndarray:
        """β·log w, keeping -inf entries at -inf (also for β = 0)"""
        return np.multiply(beta, self.log_w, out=np.full_like(self.log_w, -np.inf),
                           where=np.isfinite(self.log_w))

    def __repr__(self):
        return f"LogWeightBatch(size={self.size}, log_sum={self.log_sum:.6g})"


@dataclass(frozen=True, eq=False)
class TemperingResult:
    beta: float
    s_log: float
    log_w_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class StageSample:
    """One stage's draws, the proposal that produced them and their cached log π"""
    draws: SampleBatch
    theta: MixtureParams
    log_pi: Optional[np.ndarray]


def _ess_from_log(log_w: np.ndarray) -> float:
    finite = np.isfinite(log_w)
    # relative to the largest weight, so the two sums do not cancel at large |log w|
    shifted = log_w - np.max(log_w[finite])
    value = math.exp(2.0 * logsumexp(shifted) - logsumexp(2.0 * shifted))
    return float(min(max(value, 1.0), float(np.count_nonzero(finite))))


def log_weights(log_pi, log_q) -> LogWeightBatch:
    """log w_i = log π(x_i) − log q(x_i)"""
    log_pi = np.asarray(log_pi, dtype=float)
    log_q = np.asarray(log_q, dtype=float)
    if log_pi.shape != log_q.shape:
        raise ContractViolation(f"log_pi {log_pi.shape} and log_q {log_q.shape} differ in length")
    if np.any(np.isnan(log_pi)) or np.any(np.isnan(log_q)):
        raise ContractViolation("NaN in target or proposal log-density")
    if not np.all(np.isfinite(log_q)):
        bad = int(np.flatnonzero(~np.isfinite(log_q))[0])
        raise ContractViolation(f"proposal log-density is not finite at particle {bad}")
    return LogWeightBatch(log_pi - log_q)


def ess(batch: LogWeightBatch) -> float:
    """(Σw)² / Σw², clipped to [1, number of non-zero weights]"""
    return _ess_from_log(batch.log_w)


def ess_at_beta(batch: LogWeightBatch, beta: float) -> float:
    """ESS of the weights w**β"""
    if not 0.0 <= beta <= 1.0:
        raise ContractViolation(f"beta must lie in [0, 1], got {beta}")
    if beta == 1.0:
        return ess(batch)
    return _ess_from_log(batch.scaled(beta))


def calibrate_beta(batch: LogWeightBatch, ess_min: float, tol: float = BISECTION_TOL,
                   max_iter: int = BISECTION_MAX_ITER) -> float:
    """Largest β in (0, 1] whose tempered ESS still reaches ``ess_min``.

    ESS(β) is non-increasing, so β = 1 is returned as soon as ESS(1) ≥ ess_min;
    otherwise the crossing is bracketed in [0, 1] and bisected down to ``tol``.
    When even β → 0 cannot reach ``ess_min`` (too many zero weights) the
    smallest admissible value ``tol`` is returned.
    """
    if ess_min > batch.size:
        raise ConfigurationError(
            f"ess_min={ess_min} is unreachable with only {batch.size} particles"
        )
    if not tol > 0:
        raise ContractViolation(f"bisection tolerance must be > 0, got {tol}")
    if ess(batch) >= ess_min:
        return 1.0

    def excess(beta):
        return ess_at_beta(batch, beta) - ess_min

    if excess(0.0) <= 0.0:
        logger.warning("ESS(0)=%g does not exceed ess_min=%g; using beta=%g",
                       ess_at_beta(batch, 0.0), ess_min, tol)
        return float(tol)
    beta = bisect(excess, 0.0, 1.0, xtol=tol, maxiter=max_iter, disp=False)
    return float(min(max(beta, tol), 1.0))


def _order_statistic_rank(tau: float, n: int) -> int:
    # round() absorbs float noise such as 0.7 * 10 = 7.000000000000001
    return max(1, math.ceil(round(tau * n, 9)))


def anti_truncation_threshold(tempered_log_w, tau: float) -> float:
    """log s: the ⌈τN⌉-th smallest tempered log weight, or -inf when τ = 0"""
    if not 0.0 <= tau < 1.0:
        raise ContractViolation(f"tau must lie in [0, 1), got {tau}")
    values = np.asarray(tempered_log_w, dtype=float).ravel()
    if tau == 0.0:
        return -math.inf
    rank = _order_statistic_rank(tau, values.size)
    return float(np.partition(values, rank - 1)[rank - 1])


def lift_to_threshold(batch: LogWeightBatch, beta: float, s_log: float) -> TemperingResult:
    """max(log s, β·log w) for every particle"""
    tempered = batch.scaled(beta)
    return TemperingResult(beta=float(beta), s_log=float(s_log), log_w_hat=np.maximum(s_log, tempered))


def anti_truncate(batch: LogWeightBatch, beta: float, tau: float) -> TemperingResult:
    """Temper by β, then raise every weight below the τ-quantile up to it"""
    if not 0.0 < beta <= 1.0:
        raise ContractViolation(f"beta must lie in (0, 1], got {beta}")
    s_log = anti_truncation_threshold(batch.scaled(beta), tau)
    return lift_to_threshold(batch, beta, s_log)


def recycle_weights(stages: Sequence[StageSample], sizes: Optional[Sequence[int]] = None,
                    cache: Optional[ProposalDensityCache] = None) -> LogWeightBatch:
    """Deterministic-mixture weights π(x) / Q(x) over every stage's draws.

    Q(x) = Σ_t N_t q_t(x) / Σ_t N_t. Only cached log π values are used; a
    stage without them is a contract violation. ``cache`` avoids recomputing
    q_s(x_u) pairs already seen by an earlier call.
    """
    if not stages:
        raise ContractViolation("recycling needs at least one stage")
    counts = [stage.draws.size for stage in stages]
    if sizes is not None and list(sizes) != counts:
        raise ContractViolation(f"declared stage sizes {list(sizes)} do not match draws {counts}")
    for index, stage in enumerate(stages):
        if stage.log_pi is None or np.shape(stage.log_pi) != (stage.draws.size,):
            raise ContractViolation(f"stage {index + 1} has no cached log-target for its draws")

    log_mix = np.log(np.asarray(counts, dtype=float) / float(sum(counts)))
    pieces = []
    for u, sample in enumerate(stages):
        columns = []
        for s, proposal in enumerate(stages):
            if cache is not None:
                columns.append(cache.proposal_log_density(s, u, proposal.theta, sample.draws.points))
            else:
                columns.append(proposal.theta.log_density(sample.draws.points))
        log_q_mix = logsumexp(np.column_stack(columns) + log_mix, axis=1)
        pieces.append(np.asarray(sample.log_pi, dtype=float) - log_q_mix)
    return LogWeightBatch(np.concatenate(pieces))
