import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from . import oracle, weights

logger = logging.getLogger(__name__)

# (label, (mean, sd) of π, (mean, sd) of q)
GAUSSIAN_PAIRS = (
    ('N(0,1)|N(3,1)', (0.0, 1.0), (3.0, 1.0)),
    ('N(0,1)|N(0,4)', (0.0, 1.0), (0.0, 2.0)),
    ('N(0,1)|N(2,4)', (0.0, 1.0), (2.0, 2.0)),
)
SANDWICH_S = (0.1, 0.5, 1.0)
SANDWICH_BETA = (0.3, 0.6, 0.9)
PROPERTY_SEED = 20240
PROPERTY_BATCHES = 1000


@dataclass(frozen=True)
class CheckRow:
    name: str
    passed: bool
    margin: float
    detail: str = ''


def _pair(label_pi, label_q, nodes=oracle.DEFAULT_NODES):
    grid = oracle.Grid1D.covering([label_pi, label_q], n=nodes)
    return oracle.gaussian_log_density(*label_pi), oracle.gaussian_log_density(*label_q), grid


def check_tempered_constant() -> List[CheckRow]:
    rows = []
    betas = np.linspace(0.0, 1.0, 21)
    for label, pi, q in GAUSSIAN_PAIRS:
        log_pi, log_q, grid = _pair(pi, q)
        values = np.array([oracle.tempered_constant(log_pi, log_q, b, grid) for b in betas])
        endpoint_error = max(abs(values[0] - 1.0), abs(values[-1] - 1.0))
        excess = float(np.max(values) - 1.0)
        margin = min(1e-6 - endpoint_error, 1e-9 - excess)
        rows.append(CheckRow(f"tempered_constant {label}", margin >= 0.0, margin,
                             f"|C(0)-1|,|C(1)-1| <= {endpoint_error:.2e}; max C - 1 = {excess:.2e}"))
    return rows


def check_kl_beta_curve() -> List[CheckRow]:
    rows = []
    betas = np.linspace(0.0, 1.0, 21)
    for label, pi, q in GAUSSIAN_PAIRS:
        log_pi, log_q, grid = _pair(pi, q)
        curve = oracle.kl_beta_curve(log_pi, log_q, betas, grid)
        reference = oracle.quad_kl(log_pi, log_q, grid)
        rise = float(np.max(np.diff(curve)))
        bend = float(np.min(np.diff(curve, n=2)))
        margin = min(1e-6 - rise, bend + 1e-6, 1e-4 - abs(curve[0] - reference), 1e-6 - abs(curve[-1]))
        rows.append(CheckRow(f"kl_beta_curve {label}", margin >= 0.0, margin,
                             f"k(0)={curve[0]:.6f} KL={reference:.6f} max step={rise:.2e} min 2nd diff={bend:.2e}"))
    return rows


def check_kl_sandwich() -> List[CheckRow]:
    rows = []
    log_pi, log_q, grid = _pair(*GAUSSIAN_PAIRS[2][1:])
    for s in SANDWICH_S:
        for beta in SANDWICH_BETA:
            mid, right = oracle.kl_sandwich_check(log_pi, log_q, beta, s, grid)
            margin = min(mid + 1e-9, right + 1e-6 - mid)
            rows.append(CheckRow(f"kl_sandwich s={s:g} beta={beta:g}", margin >= 0.0, margin,
                                 f"0 <= {mid:.6f} <= {right:.6f}"))
    return rows


def check_lambda_identity() -> List[CheckRow]:
    rows = []
    log_pi, log_q, grid = _pair((0.0, 1.0), (0.0, 2.0))
    beta = 0.7
    ratio = np.exp(beta * (log_pi(grid.nodes) - log_q(grid.nodes)))
    for label, s in (('median', float(np.median(ratio))), ('0.5', 0.5), ('1', 1.0)):
        left, right = oracle.lambda_mixture(log_pi, log_q, beta, s, grid)
        gap = abs(left - right)
        rows.append(CheckRow(f"lambda_mixture beta=0.7 s={label}", gap < 1e-4, 1e-4 - gap,
                             f"lambda={left:.6f} vs {right:.6f}"))
    return rows


def check_partitioned_kl() -> List[CheckRow]:
    log_f, log_g, grid = _pair((0.0, 1.0), (2.0, 2.0))
    total, rebuilt = oracle.partitioned_kl_check(log_f, log_g, lambda x: x < 0.5, grid)
    gap = abs(total - rebuilt)
    return [CheckRow("partitioned_kl E={x<0.5}", gap < 1e-8, 1e-8 - gap,
                     f"KL={total:.8f} rebuilt={rebuilt:.8f}")]


def check_refinement() -> List[CheckRow]:
    log_f, log_g, grid = _pair((0.0, 1.0), (1.0, 1.0), nodes=2 ** 12)
    coarse, fine = oracle.refinement_check(lambda g: oracle.quad_kl(log_f, log_g, g), grid)
    tolerance = 2e-4
    gap = abs(coarse - fine)
    return [CheckRow("grid refinement quad_kl n->2n", gap < tolerance, tolerance - gap,
                     f"{coarse:.8f} -> {fine:.8f} (exact 0.5)")]


def _random_log_weights(rng: np.random.Generator, n: int, kind: int) -> np.ndarray:
    if kind == 0:
        return rng.normal(0.0, rng.uniform(0.1, 30.0), n)
    if kind == 1:
        return rng.standard_t(df=rng.uniform(1.0, 5.0), size=n) * rng.uniform(0.5, 10.0)
    if kind == 2:
        return -rng.exponential(rng.uniform(0.5, 50.0), n)
    return np.log(rng.pareto(rng.uniform(0.5, 3.0), n) + 1e-300)


def check_ess_monotonicity(n_batches: int = PROPERTY_BATCHES, seed: int = PROPERTY_SEED) -> List[CheckRow]:
    rng = np.random.default_rng(seed)
    betas = np.linspace(0.0, 1.0, 50)
    worst = math.inf
    for i in range(n_batches):
        n = int(np.exp(rng.uniform(math.log(2), math.log(1e4))))
        batch = weights.LogWeightBatch(_random_log_weights(rng, n, i % 4))
        curve = np.array([weights.ess_at_beta(batch, b) for b in betas])
        worst = min(worst, float(np.min(curve[:-1] - curve[1:] + 1e-9 * n)))
    return [CheckRow(f"ess monotone in beta ({n_batches} batches)", worst >= 0.0, worst)]


def check_calibrate_beta() -> List[CheckRow]:
    batch = weights.LogWeightBatch([0.0, -100.0])
    rows = []
    for ess_min, exact in ((1.5, -math.log(2.0 - math.sqrt(3.0)) / 100.0),
                           (1.0 + math.sqrt(0.5), -math.log(math.sqrt(2.0) - 1.0) / 100.0)):
        beta = weights.calibrate_beta(batch, ess_min)
        gap = abs(beta - exact)
        rows.append(CheckRow(f"calibrate_beta two-point ESS_min={ess_min:.4f}", gap <= 1e-6, 1e-6 - gap,
                             f"beta={beta:.7f} exact={exact:.7f}"))
    return rows


CHECKS: Tuple[Callable[[], List[CheckRow]], ...] = (
    check_tempered_constant,
    check_kl_beta_curve,
    check_kl_sandwich,
    check_lambda_identity,
    check_partitioned_kl,
    check_refinement,
    check_ess_monotonicity,
    check_calibrate_beta,
)


def verify() -> List[CheckRow]:
    """Run every numerical check; each returns rows with a signed margin (>= 0 passes)"""
    rows: List[CheckRow] = []
    for check in CHECKS:
        produced = check()
        for row in produced:
            logger.debug("%s: %s (margin %.3e)", row.name, 'pass' if row.passed else 'FAIL', row.margin)
        rows.extend(produced)
    return rows


def format_table(rows: List[CheckRow]) -> str:
    width = max(len(row.name) for row in rows)
    lines = [f"{'check'.ljust(width)}  status  {'margin':>11}  detail"]
    for row in rows:
        lines.append(f"{row.name.ljust(width)}  {'pass' if row.passed else 'FAIL':<6}  "
                     f"{row.margin:>11.3e}  {row.detail}")
    return '\n'.join(lines)
