from .mixture import MixtureParams, SampleBatch, mixture_log_density, mixture_sample, spawn_generators
from .records import IterationRecord, RunResult, TRACE_COLUMNS
from .config import ExperimentConfig, InitSpec, TamisConfig, TargetSpec
