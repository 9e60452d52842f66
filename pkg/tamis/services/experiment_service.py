"""Experiment orchestration: replicates × sweep settings × algorithms.

Output layout under the experiment directory::

    config.json                 the resolved configuration
    aggregate.csv               one row per replicate run (AGGREGATE_COLUMNS)
    traces/<run>.csv            per-run stage trace (TRACE_COLUMNS)
    plots/<run>.svg             β_t and KL-hat_t of that run
    particles/<run>.csv         only with ``dump_particles``
    proposals/<run>.jsonl       θ_t of every stage, only with ``dump_particles``
    report.pdf                  only with ``report``

Replicate r uses seed ``seed + r`` for every algorithm and setting, so
algorithms are compared on paired streams (same θ_1, same first draws).
"""
import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional

import numpy as np

from ..exceptions import ConfigurationError, TamisError, TargetEvaluationError
from ..models.config import ExperimentConfig, InitSpec, TamisConfig, TargetSpec
from . import report_service
from .engine import SAMPLERS
from .targets import build_target

logger = logging.getLogger(__name__)

AGGREGATE_COLUMNS = (
    'experiment', 'algorithm', 'setting', 'replicate', 'seed', 'status', 'iterations',
    'stop_reason', 'n_target_evals', 'final_ess', 'mse_mean', 'mse_variance_trace',
    'convergence_iteration', 'max_beta', 'error',
)
STATUS_OK = 'ok'
STATUS_FAILED = 'failed'


def run_name(algorithm: str, setting: str, replicate: int) -> str:
    """File stem shared by the trace, plot and particle files of one run"""
    return f"{algorithm}_{re.sub(r'[^A-Za-z0-9_.-]+', '-', setting)}_r{int(replicate):03d}"


@dataclass(frozen=True)
class ReplicateJob:
    experiment: str
    algorithm: str
    setting: str
    replicate: int
    sampler: TamisConfig
    target: TargetSpec
    init: InitSpec
    out_dir: str
    dump_particles: bool = False
    blackbox_timeout: float = 30.0
    blackbox_workers: int = 1

    @property
    def seed(self) -> int:
        return self.sampler.seed

    @property
    def run_name(self) -> str:
        return run_name(self.algorithm, self.setting, self.replicate)


@dataclass
class ExperimentOutcome:
    out_dir: str
    rows: List[Dict[str, Any]]
    aggregate_path: str
    report_path: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return sum(1 for row in self.rows if row['status'] != STATUS_OK)


def _base_row(job: ReplicateJob) -> Dict[str, Any]:
    return {
        'experiment': job.experiment,
        'algorithm': job.algorithm,
        'setting': job.setting,
        'replicate': job.replicate,
        'seed': job.seed,
    }


def run_replicate(job: ReplicateJob) -> Dict[str, Any]:
    """Run one (algorithm, setting, replicate) and write its files; returns the aggregate row"""
    row = _base_row(job)
    trace_path = os.path.join(job.out_dir, 'traces', f"{job.run_name}.csv")
    rng = np.random.default_rng(job.seed)
    try:
        theta_1 = job.init.build(job.target.dim, rng)
        with build_target(job.target, timeout=job.blackbox_timeout, workers=job.blackbox_workers) as target:
            result = SAMPLERS[job.algorithm](job.sampler).run(target, theta_1, rng)
            true_mean, true_variances = target.true_mean(), target.true_variances()
    except TargetEvaluationError as exc:
        logger.error("%s failed: %s", job.run_name, exc)
        if exc.records:
            report_service.write_partial_trace_csv(exc.records, trace_path)
        row.update(status=STATUS_FAILED, iterations=len(exc.records), error=str(exc))
        return row
    except (TamisError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("%s failed: %s", job.run_name, exc)
        row.update(status=STATUS_FAILED, error=str(exc))
        return row

    report_service.write_trace_csv(result, trace_path)
    report_service.render_trace_svg(report_service.result_trace(result),
                                    os.path.join(job.out_dir, 'plots', f"{job.run_name}.svg"),
                                    title=f"{job.experiment} {job.run_name}")
    if job.dump_particles:
        report_service.write_particles_csv(result, os.path.join(job.out_dir, 'particles', f"{job.run_name}.csv"))
        report_service.write_proposals_jsonl(result, os.path.join(job.out_dir, 'proposals', f"{job.run_name}.jsonl"))

    summary = result.summary()
    row.update(
        status=STATUS_OK,
        iterations=summary['iterations'],
        stop_reason=summary['stop_reason'],
        n_target_evals=summary['n_target_evals'],
        final_ess=summary['final_ess'],
        convergence_iteration=summary['convergence_iteration'],
        max_beta=summary['max_beta'],
        error='',
    )
    if true_mean is not None:
        row['mse_mean'] = float(np.mean((result.estimate_mean() - true_mean) ** 2))
    if true_variances is not None:
        row['mse_variance_trace'] = (result.estimate_variance_trace() - float(np.sum(true_variances))) ** 2
    logger.info("%s: %d stages, final ESS %.1f, %d target evaluations",
                job.run_name, result.iterations, result.final_ess, result.n_target_evals)
    return row


def build_jobs(cfg: ExperimentConfig, out_dir: str, dump_particles: bool = False,
               blackbox_timeout: float = 30.0) -> List[ReplicateJob]:
    jobs = []
    for setting in cfg.settings():
        for algorithm in cfg.algorithms:
            for r in range(cfg.replicates):
                jobs.append(ReplicateJob(
                    experiment=cfg.experiment,
                    algorithm=algorithm,
                    setting=setting.label,
                    replicate=r,
                    sampler=replace(setting.sampler, seed=cfg.seed + r),
                    target=setting.target,
                    init=setting.init,
                    out_dir=out_dir,
                    dump_particles=dump_particles,
                    blackbox_timeout=blackbox_timeout,
                    blackbox_workers=cfg.blackbox_workers,
                ))
    return jobs


def _write_config(cfg: ExperimentConfig, out_dir: str) -> str:
    resolved = dict(cfg.raw)
    resolved.update(seed=cfg.seed, output_dir=out_dir)
    path = os.path.join(out_dir, 'config.json')
    with open(path, 'w') as f:
        json.dump(resolved, f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def sampler_notes(cfg: ExperimentConfig) -> List[str]:
    """Caveats each configured algorithm attaches to its results"""
    notes = []
    for algorithm in cfg.algorithms:
        notes.extend(SAMPLERS[algorithm](cfg.sampler).notes())
    return notes


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[str] = None, workers: int = 1,
                   dump_particles: bool = False, report: bool = False,
                   blackbox_timeout: float = 30.0) -> ExperimentOutcome:
    """Execute every replicate of ``cfg`` and write the experiment directory.

    Replicates run in a process pool when ``workers`` > 1; rows are written
    in job order either way, so the aggregate does not depend on scheduling.
    A failed replicate is recorded with status ``failed``; the others still run.
    """
    cfg.validate()
    out_dir = output_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    _write_config(cfg, out_dir)

    jobs = build_jobs(cfg, out_dir, dump_particles=dump_particles, blackbox_timeout=blackbox_timeout)
    logger.info("experiment %s: %d run(s) with %d worker(s) into %s",
                cfg.experiment, len(jobs), workers, out_dir)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_replicate, jobs))
    else:
        rows = [run_replicate(job) for job in jobs]

    aggregate_path = report_service.write_rows_csv(rows, AGGREGATE_COLUMNS, os.path.join(out_dir, 'aggregate.csv'))
    notes = sampler_notes(cfg)
    outcome = ExperimentOutcome(out_dir=out_dir, rows=rows, aggregate_path=aggregate_path, notes=notes)
    if outcome.failed:
        logger.warning("experiment %s: %d of %d run(s) failed", cfg.experiment, outcome.failed, len(rows))
    if report:
        outcome.report_path = build_report(out_dir, notes=notes)
    return outcome


def _parse_row(row: Dict[str, str]) -> Dict[str, Any]:
    """Aggregate CSV row with empty cells as None"""
    return {key: (value if value != '' else None) for key, value in row.items()}


def build_report(out_dir: str, notes: Optional[List[str]] = None) -> str:
    """PDF report of an experiment directory; reads only the aggregate, config and traces"""
    aggregate_path = os.path.join(out_dir, 'aggregate.csv')
    if not os.path.exists(aggregate_path):
        raise TamisError(f"{out_dir} has no aggregate.csv; run the experiment first")
    rows = [_parse_row(row) for row in report_service.read_rows_csv(aggregate_path)]

    config: Dict[str, Any] = {}
    config_path = os.path.join(out_dir, 'config.json')
    if os.path.exists(config_path):
        with open(config_path, 'r') as f:
            config = json.load(f)
    if notes is None and config:
        try:
            notes = sampler_notes(ExperimentConfig.from_dict(config))
        except ConfigurationError as exc:
            logger.warning("%s: config.json no longer parses, report has no sampler notes (%s)", out_dir, exc)

    traces = {}
    for row in rows:
        if row['status'] != STATUS_OK or int(row['replicate']) != 0:
            continue
        path = os.path.join(out_dir, 'traces', f"{run_name(row['algorithm'], row['setting'], 0)}.csv")
        if os.path.exists(path):
            traces[f"{row['algorithm']} {row['setting']}"] = report_service.read_trace_csv(path)

    report_data = {
        'experiment': config.get('experiment', rows[0]['experiment'] if rows else os.path.basename(out_dir)),
        'config': {key: value for key, value in config.items() if key != 'output_dir'},
        'summary': report_service.summarize(rows),
        'traces': traces,
        'notes': list(notes or []),
    }
    return report_service.ExperimentReportGenerator().generate_report(
        report_data, os.path.join(out_dir, 'report.pdf')
    )
