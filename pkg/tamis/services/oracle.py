"""One-dimensional quadrature checks of the tempering and anti-truncation results.

Densities are passed as vectorized log-density callables and normalized on
the grid by the trapezoid rule, so unnormalized inputs are fine. With
normalized π and q:

* C(β) = ∫ π^β q^(1−β) satisfies C(0) = C(1) = 1 and C(β) ≤ 1.
* k(β) = KL(π ‖ π_β), π_β ∝ π^β q^(1−β), is convex and non-increasing,
  from KL(π ‖ q) at β = 0 to 0 at β = 1.
* The anti-truncated target π̂ ∝ q · max(s, (π/q)^β) equals
  s·q on E = {(π/q)^β ≤ s} and π^β q^(1−β) off E; it is the mixture
  λ q|E + (1 − λ) π_β|Ē with λ = s q(E) = 1 − ∫_Ē π^β q^(1−β) (both over
  the mass of π̂), and for s ≤ 1
  0 ≤ KL(π_β ‖ π̂) ≤ KL(π_β ‖ q).

π̂ is built from grid "particles" through the same threshold lift the
sampler applies to its weights, so a broken lift shows up here.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from ..exceptions import OracleError
from . import weights

logger = logging.getLogger(__name__)

LogDensity = Callable[[np.ndarray], np.ndarray]

DEFAULT_NODES = 2 ** 16
DEFAULT_WIDTH = 12.0


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n: int = DEFAULT_NODES

    def __post_init__(self):
        if not self.hi > self.lo:
            raise OracleError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.n < 100:
            raise OracleError(f"grid needs at least 100 nodes, got {self.n}")

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @cached_property
    def weights(self) -> np.ndarray:
        h = (self.hi - self.lo) / (self.n - 1)
        w = np.full(self.n, h)
        w[0] = w[-1] = h / 2.0
        return w

    def refined(self) -> 'Grid1D':
        return Grid1D(self.lo, self.hi, 2 * self.n)

    @classmethod
    def covering(cls, moments: Sequence[Tuple[float, float]], n: int = DEFAULT_NODES,
                 width: float = DEFAULT_WIDTH) -> 'Grid1D':
        """Grid spanning ±``width`` of the largest sd around every (mean, sd) pair"""
        widest = max(sd for _, sd in moments)
        lo = min(mean for mean, _ in moments) - width * widest
        hi = max(mean for mean, _ in moments) + width * widest
        return cls(lo, hi, n)


def gaussian_log_density(mean: float, sd: float) -> LogDensity:
    def log_density(x):
        z = (np.asarray(x, dtype=float) - mean) / sd
        return -0.5 * z * z - math.log(sd) - 0.5 * math.log(2.0 * math.pi)
    return log_density


def _evaluate(log_f: LogDensity, grid: Grid1D) -> np.ndarray:
    values = np.asarray(log_f(grid.nodes), dtype=float)
    bad = np.isnan(values) | (values == np.inf)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise OracleError(f"non-finite integrand at node {i} (x={grid.nodes[i]:.6g})")
    return values


def _integrate(values: np.ndarray, grid: Grid1D) -> float:
    return float(trapezoid(values, grid.nodes))


def _normalized(log_f: LogDensity, grid: Grid1D) -> np.ndarray:
    """Log-density values on the grid, shifted so the density integrates to 1"""
    values = _evaluate(log_f, grid)
    peak = np.max(values)
    if not np.isfinite(peak):
        raise OracleError("density vanishes on the whole grid")
    return values - (peak + math.log(_integrate(np.exp(values - peak), grid)))


def _kl_from_values(log_f: np.ndarray, log_g: np.ndarray, grid: Grid1D) -> float:
    f = np.exp(log_f)
    with np.errstate(invalid='ignore'):
        integrand = np.where(f > 0, f * (log_f - log_g), 0.0)
    if np.any(~np.isfinite(integrand)):
        i = int(np.flatnonzero(~np.isfinite(integrand))[0])
        raise OracleError(f"non-finite integrand at node {i} (x={grid.nodes[i]:.6g})")
    return _integrate(integrand, grid)


def quad_kl(log_f: LogDensity, log_g: LogDensity, grid: Grid1D) -> float:
    """KL(f ‖ g) between the grid-normalized densities"""
    return _kl_from_values(_normalized(log_f, grid), _normalized(log_g, grid), grid)


def tempered_constant(log_pi: LogDensity, log_q: LogDensity, beta: float, grid: Grid1D) -> float:
    """C(β) = ∫ π^β q^(1−β) for normalized π and q"""
    lp, lq = _normalized(log_pi, grid), _normalized(log_q, grid)
    return _integrate(np.exp(beta * lp + (1.0 - beta) * lq), grid)


def _anti_truncated(lp: np.ndarray, lq: np.ndarray, beta: float, s: float) -> np.ndarray:
    """Unnormalized log π̂ on the grid: log q + max(log s, β (log π − log q))"""
    batch = weights.LogWeightBatch(lp - lq)
    lifted = weights.lift_to_threshold(batch, beta, math.log(s) if s > 0 else -math.inf)
    return lq + lifted.log_w_hat


def lambda_mixture(log_pi: LogDensity, log_q: LogDensity, beta: float, s: float,
                   grid: Grid1D) -> Tuple[float, float]:
    """(s q(E), 1 − ∫_Ē π^β q^(1−β)), both divided by the mass of π̂"""
    lp, lq = _normalized(log_pi, grid), _normalized(log_q, grid)
    in_e = beta * (lp - lq) <= math.log(s)
    mass = _integrate(np.exp(_anti_truncated(lp, lq, beta, s)), grid)
    left = s * _integrate(np.where(in_e, np.exp(lq), 0.0), grid) / mass
    right = 1.0 - _integrate(np.where(in_e, 0.0, np.exp(beta * lp + (1.0 - beta) * lq)), grid) / mass
    return left, right


def kl_beta_curve(log_pi: LogDensity, log_q: LogDensity, beta_grid: Sequence[float],
                  grid: Grid1D) -> np.ndarray:
    """k(β) = KL(π ‖ π_β) for each β"""
    lp, lq = _normalized(log_pi, grid), _normalized(log_q, grid)
    curve = []
    for beta in beta_grid:
        tempered = beta * lp + (1.0 - beta) * lq
        tempered = tempered - math.log(_integrate(np.exp(tempered), grid))
        curve.append(_kl_from_values(lp, tempered, grid))
    return np.array(curve)


def kl_sandwich_check(log_pi: LogDensity, log_q: LogDensity, beta: float, s: float,
                      grid: Grid1D) -> Tuple[float, float]:
    """(KL(π_β ‖ π̂), KL(π_β ‖ q)); the first must lie in [0, second] when s ≤ 1"""
    if not 0.0 < s <= 1.0:
        raise OracleError(f"the sandwich bound needs s in (0, 1], got {s}")
    lp, lq = _normalized(log_pi, grid), _normalized(log_q, grid)
    tempered = beta * lp + (1.0 - beta) * lq
    tempered = tempered - math.log(_integrate(np.exp(tempered), grid))
    hat = _anti_truncated(lp, lq, beta, s)
    hat = hat - math.log(_integrate(np.exp(hat), grid))
    return _kl_from_values(tempered, hat, grid), _kl_from_values(tempered, lq, grid)


def partitioned_kl_check(log_f: LogDensity, log_g: LogDensity, in_e: Callable[[np.ndarray], np.ndarray],
                         grid: Grid1D) -> Tuple[float, float]:
    """(KL(f ‖ g), the same value rebuilt from the split over E and its complement)"""
    lf, lg = _normalized(log_f, grid), _normalized(log_g, grid)
    mask = np.asarray(in_e(grid.nodes), dtype=bool)
    total = _kl_from_values(lf, lg, grid)

    rebuilt = 0.0
    for part in (mask, ~mask):
        f_mass = _integrate(np.where(part, np.exp(lf), 0.0), grid)
        g_mass = _integrate(np.where(part, np.exp(lg), 0.0), grid)
        if f_mass <= 0.0:
            continue
        conditional_f = np.where(part, lf - math.log(f_mass), -np.inf)
        conditional_g = np.where(part, lg - math.log(g_mass), -np.inf)
        rebuilt += f_mass * _kl_from_values(conditional_f, conditional_g, grid)
        rebuilt += f_mass * math.log(f_mass / g_mass)
    return total, rebuilt


def refinement_check(evaluate: Callable[[Grid1D], float], grid: Grid1D) -> Tuple[float, float]:
    """Value of ``evaluate`` on ``grid`` and on the grid with twice the nodes"""
    return evaluate(grid), evaluate(grid.refined())
