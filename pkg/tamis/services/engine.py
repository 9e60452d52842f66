"""Adaptive importance sampling loops: TAMIS and the AMIS / N-PMC baselines.

Each stage t draws N_t points from q_t, evaluates the target once per
point, and stops at the first stage where ESS_1 + … + ESS_t exceeds
``ess_predefined`` (or at ``max_iterations``). Otherwise the weights are
tempered and the proposal is refitted by resampling plus EM. At the end
every draw of every stage is reweighted against the deterministic mixture
of all proposals; target values come from the stage caches, so the target
is evaluated exactly Σ N_t times.

The three samplers share that loop and differ only in how the next
proposal is fitted:

* TAMIS calibrates β_t by bisection on the ESS and anti-truncates at the
  τ-quantile of the tempered weights.
* N-PMC follows the fixed ladder β_t = 1 / (1 + exp(−(t − ℓ))) with no
  anti-truncation and no weight clipping.
* AMIS never tempers; at each stage it reweights all past draws against
  the running mixture of past proposals and fits on that pooled sample.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import entr, expit

from ..exceptions import ContractViolation, TargetEvaluationError
from ..models.config import TamisConfig
from ..models.mixture import MixtureParams
from ..models.records import (STOP_ESS_REACHED, STOP_MAX_ITERATIONS, IterationRecord,
                              RunResult)
from .adapt import ResampleSpec, em_fit, resample
from .cache_service import ProposalDensityCache
from .targets import Target
from .weights import (LogWeightBatch, StageSample, anti_truncate, calibrate_beta, ess,
                      log_weights, recycle_weights)

logger = logging.getLogger(__name__)


def kl_hat(normalized_weights) -> float:
    """Σ ω log ω + log N, the entropy-based estimate of KL(π ‖ q_t); lies in [0, log N]"""
    omega = np.asarray(normalized_weights, dtype=float)
    log_n = math.log(omega.size)
    value = log_n - float(np.sum(entr(omega)))
    return min(max(value, 0.0), log_n)


def npmc_beta_schedule(t: int, ladder: float = 5.0) -> float:
    return float(expit(t - ladder))


class TamisSampler:
    """Tempered, anti-truncated adaptive multiple importance sampling"""

    algorithm = 'tamis'

    def __init__(self, config: TamisConfig):
        self.config = config.validate()

    def notes(self) -> List[str]:
        return []

    def run(self, target: Target, theta_1: MixtureParams,
            rng: Optional[np.random.Generator] = None) -> RunResult:
        cfg = self.config
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        if theta_1.dim != target.dim:
            raise ContractViolation(f"proposal dimension {theta_1.dim} != target dimension {target.dim}")
        cfg.check_against(theta_1.n_components, theta_1.dim)

        cache = ProposalDensityCache()
        records: List[IterationRecord] = []
        stages: List[StageSample] = []
        theta = theta_1
        cumulative_ess = 0.0
        evaluations_at_start = target.n_evaluations
        stop_reason = STOP_MAX_ITERATIONS

        for t in range(1, cfg.max_iterations + 1):
            draws = theta.sample(cfg.stage_size(t), rng, stage=t)
            try:
                log_pi = target.evaluate(draws.points)
            except TargetEvaluationError as exc:
                exc.records = list(records)
                logger.error("stage %d: target evaluation failed, %d stage(s) kept", t, len(records))
                raise

            log_q = cache.proposal_log_density(t - 1, t - 1, theta, draws.points)
            batch = log_weights(log_pi, log_q)
            ess_t = ess(batch)
            kl_t = kl_hat(batch.normalized())
            cumulative_ess += ess_t
            stages.append(StageSample(draws=draws, theta=theta, log_pi=log_pi))
            pooled = self._pooled_weights(stages, cache)
            n_evals = target.n_evaluations - evaluations_at_start

            reached = cumulative_ess > cfg.ess_predefined
            if reached or t == cfg.max_iterations:
                stop_reason = STOP_ESS_REACHED if reached else STOP_MAX_ITERATIONS
                records.append(IterationRecord(
                    t=t, theta=theta, draws=draws, log_pi=log_pi, log_w=batch, ess_t=ess_t,
                    beta_t=1.0, s_log_t=-math.inf, kl_hat_t=kl_t, n_target_evals=n_evals,
                    calibrated=False, pooled_ess=None if pooled is None else ess(pooled),
                ))
                logger.info("%s stage %d: ESS=%.1f cumulative=%.1f KL-hat=%.3f, stopping (%s)",
                            self.algorithm, t, ess_t, cumulative_ess, kl_t, stop_reason)
                break

            beta, s_log, theta_next = self._update(t, stages, batch, pooled, rng)
            records.append(IterationRecord(
                t=t, theta=theta, draws=draws, log_pi=log_pi, log_w=batch, ess_t=ess_t,
                beta_t=beta, s_log_t=s_log, kl_hat_t=kl_t, n_target_evals=n_evals,
                pooled_ess=None if pooled is None else ess(pooled),
            ))
            logger.info("%s stage %d: ESS=%.1f beta=%.4g KL-hat=%.3f",
                        self.algorithm, t, ess_t, beta, kl_t)
            theta = theta_next

        final = recycle_weights(stages, cache=cache)
        logger.debug("proposal cache: %s", cache.get_stats())
        return RunResult(records=records, final_log_w=final, final_ess=ess(final),
                         stop_reason=stop_reason, algorithm=self.algorithm, notes=self.notes())

    def _pooled_weights(self, stages, cache) -> Optional[LogWeightBatch]:
        return None

    def _refit(self, theta: MixtureParams, points: np.ndarray, log_w_hat: np.ndarray,
               rng: np.random.Generator, size: int) -> MixtureParams:
        cfg = self.config
        spec = ResampleSpec(size=cfg.resample_size or size, scheme=cfg.resample_scheme)
        indices = resample(log_w_hat, spec, rng)
        return em_fit(theta, points[indices], max_steps=cfg.em_max_steps, rel_tol=cfg.em_rel_tol)

    def _update(self, t: int, stages: List[StageSample], batch: LogWeightBatch,
                pooled: Optional[LogWeightBatch], rng) -> Tuple[float, float, MixtureParams]:
        cfg = self.config
        ess_min = min(cfg.ess_min, float(batch.size))
        beta = calibrate_beta(batch, ess_min, tol=cfg.bisection_tol, max_iter=cfg.bisection_max_iter)
        tempering = anti_truncate(batch, beta, cfg.tau)
        current = stages[-1]
        theta_next = self._refit(current.theta, current.draws.points, tempering.log_w_hat, rng, batch.size)
        return beta, tempering.s_log, theta_next


class NPMCSampler(TamisSampler):
    """Tempering along a fixed logistic ladder, no anti-truncation"""

    algorithm = 'npmc'

    def notes(self) -> List[str]:
        return [f"N-PMC baseline: logistic tempering ladder with l={self.config.npmc_ladder:g}; "
                "importance weights are not clipped"]

    def _update(self, t, stages, batch, pooled, rng):
        beta = npmc_beta_schedule(t, self.config.npmc_ladder)
        tempering = anti_truncate(batch, beta, 0.0)
        current = stages[-1]
        theta_next = self._refit(current.theta, current.draws.points, tempering.log_w_hat, rng, batch.size)
        return beta, tempering.s_log, theta_next


class AMISSampler(TamisSampler):
    """Untempered adaptation on all past draws reweighted by the mixture of past proposals"""

    algorithm = 'amis'

    def _pooled_weights(self, stages, cache):
        return recycle_weights(stages, cache=cache)

    def _update(self, t, stages, batch, pooled, rng):
        points = np.vstack([stage.draws.points for stage in stages])
        theta_next = self._refit(stages[-1].theta, points, pooled.log_w, rng, batch.size)
        return 1.0, -math.inf, theta_next


SAMPLERS = {
    'tamis': TamisSampler,
    'npmc': NPMCSampler,
    'amis': AMISSampler,
}


def run_tamis(target: Target, theta_1: MixtureParams, cfg: TamisConfig,
              rng: Optional[np.random.Generator] = None) -> RunResult:
    return TamisSampler(cfg).run(target, theta_1, rng)


def run_npmc(target: Target, theta_1: MixtureParams, cfg: TamisConfig,
             rng: Optional[np.random.Generator] = None) -> RunResult:
    return NPMCSampler(cfg).run(target, theta_1, rng)


def run_amis(target: Target, theta_1: MixtureParams, cfg: TamisConfig,
             rng: Optional[np.random.Generator] = None) -> RunResult:
    return AMISSampler(cfg).run(target, theta_1, rng)
