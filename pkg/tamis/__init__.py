"""Tempered anti-truncated adaptive multiple importance sampling"""
from .exceptions import (TamisError, ContractViolation, ConfigurationError, TargetEvaluationError,
                         OracleError)
from .models import (MixtureParams, SampleBatch, mixture_log_density, mixture_sample, spawn_generators,
                     IterationRecord, RunResult, ExperimentConfig, InitSpec, TamisConfig, TargetSpec)
from .services import (log_weights, ess, calibrate_beta, anti_truncate, recycle_weights, em_fit,
                       build_target, run_tamis, run_npmc, run_amis, kl_hat)

__version__ = '0.1.0'
