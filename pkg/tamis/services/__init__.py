from .weights import (LogWeightBatch, TemperingResult, StageSample, log_weights, ess, ess_at_beta,
                      calibrate_beta, anti_truncation_threshold, lift_to_threshold, anti_truncate,
                      recycle_weights)
from .adapt import ResampleSpec, resample, em_step, em_fit
from .targets import (Target, GaussianIIDTarget, RosenbrockTarget, BlackboxTarget, BlackboxClient,
                      gaussian_iid_log_density, rosenbrock_log_density, blackbox_log_density,
                      build_target)
from .engine import TamisSampler, NPMCSampler, AMISSampler, SAMPLERS, kl_hat, run_tamis, run_npmc, run_amis
from .cache_service import CacheService, ProposalDensityCache
