import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .mixture import MixtureParams, SampleBatch

TRACE_COLUMNS = ('t', 'ess_t', 'beta_t', 's_log_t', 'kl_hat_t', 'n_target_evals')

STOP_ESS_REACHED = 'ess_reached'
STOP_MAX_ITERATIONS = 'max_iterations'


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """Everything observed at stage t.

    ``calibrated`` is False for the stopping stage, where no tempering
    happens; its ``beta_t`` is then 1 (written as nan in trace files) and
    ``s_log_t`` is -inf.
    ``n_target_evals`` is the cumulative evaluation count after the stage.
    ``pooled_ess`` is only set by samplers that reweight past draws (AMIS).
    """
    t: int
    theta: MixtureParams
    draws: SampleBatch
    log_pi: np.ndarray
    log_w: Any  # LogWeightBatch
    ess_t: float
    beta_t: float
    s_log_t: float
    kl_hat_t: float
    n_target_evals: int
    calibrated: bool = True
    pooled_ess: Optional[float] = None

    def trace_row(self) -> Dict[str, Any]:
        return {
            't': self.t,
            'ess_t': repr(float(self.ess_t)),
            'beta_t': repr(float(self.beta_t)) if self.calibrated else 'nan',
            's_log_t': repr(float(self.s_log_t)),
            'kl_hat_t': repr(float(self.kl_hat_t)),
            'n_target_evals': self.n_target_evals,
        }


@dataclass(eq=False)
class RunResult:
    records: List[IterationRecord]
    final_log_w: Any  # LogWeightBatch over all recycled particles
    final_ess: float
    stop_reason: str
    algorithm: str = 'tamis'
    notes: List[str] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def n_target_evals(self) -> int:
        return self.records[-1].n_target_evals if self.records else 0

    @property
    def points(self) -> np.ndarray:
        """All recycled particles, stage by stage, in the order of ``final_log_w``"""
        return np.vstack([record.draws.points for record in self.records])

    @property
    def cumulative_ess(self) -> float:
        return float(sum(record.ess_t for record in self.records))

    def beta_trace(self) -> np.ndarray:
        return np.array([record.beta_t for record in self.records])

    def calibrated_betas(self) -> np.ndarray:
        return np.array([record.beta_t for record in self.records if record.calibrated])

    def kl_trace(self) -> np.ndarray:
        return np.array([record.kl_hat_t for record in self.records])

    def convergence_iteration(self, threshold: float = 1.0) -> Optional[int]:
        """First stage whose KL-hat falls below ``threshold``; None if none does"""
        for record in self.records:
            if record.kl_hat_t < threshold:
                return record.t
        return None

    def estimate_mean(self) -> np.ndarray:
        """Self-normalized mean of the recycled sample"""
        return self.final_log_w.normalized() @ self.points

    def estimate_variances(self) -> np.ndarray:
        omega = self.final_log_w.normalized()
        points = self.points
        mean = omega @ points
        return omega @ (points - mean) ** 2

    def estimate_variance_trace(self) -> float:
        return float(np.sum(self.estimate_variances()))

    def stage_mean_errors(self, true_mean) -> np.ndarray:
        """Per-stage RMSE over coordinates of the stage's own self-normalized mean"""
        truth = np.asarray(true_mean, dtype=float)
        errors = []
        for record in self.records:
            estimate = record.log_w.normalized() @ record.draws.points
            errors.append(math.sqrt(float(np.mean((estimate - truth) ** 2))))
        return np.array(errors)

    def trace_rows(self) -> List[Dict[str, Any]]:
        return [record.trace_row() for record in self.records]

    def summary(self) -> Dict[str, Any]:
        betas = self.calibrated_betas()
        return {
            'algorithm': self.algorithm,
            'iterations': self.iterations,
            'stop_reason': self.stop_reason,
            'final_ess': float(self.final_ess),
            'n_target_evals': self.n_target_evals,
            'convergence_iteration': self.convergence_iteration(),
            'max_beta': float(np.max(betas)) if betas.size else math.nan,
        }
