import math

import numpy as np
import pytest

from tamis.exceptions import OracleError
from tamis.services import oracle
from tamis.services.oracle import (Grid1D, gaussian_log_density, kl_beta_curve, kl_sandwich_check,
                                   lambda_mixture, partitioned_kl_check, quad_kl, refinement_check,
                                   tempered_constant)


@pytest.fixture(scope='module')
def narrow_wide():
    pi, q = (0.0, 1.0), (0.0, 2.0)
    return gaussian_log_density(*pi), gaussian_log_density(*q), Grid1D.covering([pi, q])


class TestGrid:
    def test_trapezoid_weights_sum_to_length(self):
        grid = Grid1D(-3.0, 5.0, 1000)
        assert grid.weights.sum() == pytest.approx(8.0)
        assert grid.nodes[0] == -3.0 and grid.nodes[-1] == 5.0

    def test_refined_doubles_nodes(self):
        assert Grid1D(0.0, 1.0, 500).refined().n == 1000

    def test_rejects_bad_bounds(self):
        with pytest.raises(OracleError):
            Grid1D(1.0, 1.0)


class TestQuadKl:
    """KL(f ‖ g) by trapezoid quadrature"""

    def test_identical(self):
        f = gaussian_log_density(0.3, 1.7)
        assert quad_kl(f, f, Grid1D.covering([(0.3, 1.7)])) == pytest.approx(0.0, abs=1e-10)

    def test_shifted_mean(self):
        grid = Grid1D.covering([(0.0, 1.0), (1.0, 1.0)])
        assert quad_kl(gaussian_log_density(0, 1), gaussian_log_density(1, 1), grid) == pytest.approx(0.5, abs=1e-4)

    def test_wider_variance(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        expected = 0.5 * (0.25 + math.log(4.0) - 1.0)
        assert quad_kl(log_pi, log_q, grid) == pytest.approx(expected, abs=1e-4)
        assert expected == pytest.approx(0.31815, abs=1e-5)

    def test_unnormalized_inputs(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        shifted = quad_kl(lambda x: log_pi(x) + 40.0, lambda x: log_q(x) - 3.0, grid)
        assert shifted == pytest.approx(quad_kl(log_pi, log_q, grid), abs=1e-10)

    def test_non_finite_integrand_names_node(self):
        grid = Grid1D(-1.0, 1.0, 101)
        with pytest.raises(OracleError, match='node 50'):
            quad_kl(lambda x: np.where(np.isclose(x, 0.0), np.nan, -x * x), gaussian_log_density(0, 1), grid)


class TestTemperedConstant:
    def test_endpoints(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        assert tempered_constant(log_pi, log_q, 0.0, grid) == pytest.approx(1.0, abs=1e-6)
        assert tempered_constant(log_pi, log_q, 1.0, grid) == pytest.approx(1.0, abs=1e-6)

    def test_midpoint_against_refined_grid(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        reference = tempered_constant(log_pi, log_q, 0.5, Grid1D(grid.lo, grid.hi, 10 ** 6))
        assert tempered_constant(log_pi, log_q, 0.5, grid) == pytest.approx(reference, abs=1e-8)
        assert reference == pytest.approx(math.sqrt(0.8), abs=1e-8)

    def test_bounded_by_one(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        for beta in np.linspace(0.0, 1.0, 11):
            assert tempered_constant(log_pi, log_q, beta, grid) <= 1.0 + 1e-9


class TestLambdaMixture:
    """Both sides of the contamination-weight identity"""

    def test_median_ratio(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        s = float(np.median(np.exp(0.7 * (log_pi(grid.nodes) - log_q(grid.nodes)))))
        left, right = lambda_mixture(log_pi, log_q, 0.7, s, grid)
        assert abs(left - right) < 1e-4
        assert 0.0 < left < 1.0

    def test_empty_contamination_set(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        left, right = lambda_mixture(log_pi, log_q, 0.7, 1e-80, grid)
        assert left == pytest.approx(0.0, abs=1e-12)
        assert right == pytest.approx(0.0, abs=1e-9)

    def test_full_contamination(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        left, right = lambda_mixture(log_pi, log_q, 0.7, 1e6, grid)
        assert left == pytest.approx(1.0, abs=1e-9)
        assert right == pytest.approx(1.0, abs=1e-9)


class TestKlBetaCurve:
    def test_far_pair_shape(self):
        log_pi, log_q = gaussian_log_density(0, 1), gaussian_log_density(3, 1)
        grid = Grid1D.covering([(0, 1), (3, 1)])
        curve = kl_beta_curve(log_pi, log_q, np.linspace(0.0, 1.0, 21), grid)
        assert curve[0] == pytest.approx(quad_kl(log_pi, log_q, grid), abs=1e-4)
        assert curve[0] == pytest.approx(4.5, abs=1e-4)
        assert curve[-1] == pytest.approx(0.0, abs=1e-6)
        assert np.all(np.diff(curve) <= 1e-6)
        assert np.all(np.diff(curve, n=2) >= -1e-6)


class TestKlSandwich:
    @pytest.mark.parametrize('s', [0.1, 0.5, 1.0])
    @pytest.mark.parametrize('beta', [0.3, 0.6, 0.9])
    def test_bounds(self, s, beta):
        log_pi, log_q = gaussian_log_density(0, 1), gaussian_log_density(2, 2)
        mid, right = kl_sandwich_check(log_pi, log_q, beta, s, Grid1D.covering([(0, 1), (2, 2)]))
        assert -1e-9 <= mid <= right + 1e-6

    def test_vanishing_contamination(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        mid, _ = kl_sandwich_check(log_pi, log_q, 0.5, 1e-12, grid)
        assert mid < 1e-4

    def test_rejects_s_above_one(self, narrow_wide):
        log_pi, log_q, grid = narrow_wide
        with pytest.raises(OracleError):
            kl_sandwich_check(log_pi, log_q, 0.5, 1.5, grid)


class TestPartitionedKl:
    def test_split_rebuilds_total(self):
        log_f, log_g = gaussian_log_density(0, 1), gaussian_log_density(2, 2)
        grid = Grid1D.covering([(0, 1), (2, 2)])
        total, rebuilt = partitioned_kl_check(log_f, log_g, lambda x: x < 0.5, grid)
        assert rebuilt == pytest.approx(total, abs=1e-8)


class TestRefinement:
    def test_kl_stable_under_refinement(self):
        grid = Grid1D.covering([(0, 1), (1, 1)], n=2 ** 12)
        coarse, fine = refinement_check(
            lambda g: quad_kl(gaussian_log_density(0, 1), gaussian_log_density(1, 1), g), grid)
        assert abs(coarse - fine) < 2e-4
        assert fine == pytest.approx(0.5, abs=1e-4)

    def test_anti_truncation_goes_through_weight_lift(self, monkeypatch, narrow_wide):
        calls = []
        original = oracle.weights.lift_to_threshold

        def spy(*args):
            calls.append(args[1:])
            return original(*args)

        monkeypatch.setattr(oracle.weights, 'lift_to_threshold', spy)
        log_pi, log_q, grid = narrow_wide
        lambda_mixture(log_pi, log_q, 0.7, 0.5, grid)
        assert calls and calls[0][0] == 0.7
