import math

import numpy as np
import pytest

from tamis.exceptions import ContractViolation
from tamis.models import MixtureParams, TamisConfig
from tamis.models.records import STOP_ESS_REACHED, STOP_MAX_ITERATIONS
from tamis.services.engine import (AMISSampler, NPMCSampler, TamisSampler, kl_hat, npmc_beta_schedule,
                                   run_amis, run_npmc, run_tamis)
from tamis.services.targets import GaussianIIDTarget, RosenbrockTarget


@pytest.fixture
def offset_target():
    return GaussianIIDTarget(3.0, 0.5, 2)


@pytest.fixture
def wide_start():
    return MixtureParams(weights=[0.5, 0.5], means=[[-2.0, 0.0], [1.0, 2.0]], variances=[[20.0, 20.0]] * 2)


class TestKlHat:
    """Σ ω log ω + log N"""

    def test_uniform(self):
        assert kl_hat(np.full(8, 1 / 8)) == pytest.approx(0.0, abs=1e-15)

    def test_degenerate(self):
        omega = np.zeros(50)
        omega[3] = 1.0
        assert kl_hat(omega) == pytest.approx(math.log(50))

    def test_arithmetic(self):
        assert kl_hat([0.5, 0.25, 0.25]) == pytest.approx(-1.5 * math.log(2) + math.log(3), abs=1e-12)
        assert kl_hat([0.5, 0.25, 0.25]) == pytest.approx(0.05889, abs=1e-5)


class TestNpmcSchedule:
    def test_midpoint(self):
        assert npmc_beta_schedule(5, 5.0) == 0.5

    def test_five_past_midpoint(self):
        assert npmc_beta_schedule(10, 5.0) == pytest.approx(0.993307, abs=1e-6)

    def test_strictly_increasing(self):
        ladder = [npmc_beta_schedule(t) for t in range(1, 30)]
        assert all(a < b for a, b in zip(ladder, ladder[1:]))


class TestTamisRun:
    """The adaptive loop: sample, weight, stop check, temper, refit, recycle"""

    def test_config_seed_drives_run_without_generator(self, offset_target, wide_start):
        cfg = TamisConfig(sample_size=200, ess_min=50, max_iterations=3, seed=11)
        seeded = TamisSampler(cfg).run(offset_target, wide_start)
        explicit = run_tamis(offset_target, wide_start, cfg, np.random.default_rng(11))
        again = run_tamis(offset_target, wide_start, cfg)
        np.testing.assert_array_equal(seeded.estimate_mean(), explicit.estimate_mean())
        np.testing.assert_array_equal(seeded.estimate_mean(), again.estimate_mean())

    def test_evaluation_budget(self, offset_target, wide_start, rng):
        cfg = TamisConfig(sample_size=(300, 200, 250), ess_min=50, tau=0.4, max_iterations=6)
        result = run_tamis(offset_target, wide_start, cfg, rng)
        expected = sum(cfg.stage_size(t) for t in range(1, result.iterations + 1))
        assert offset_target.n_evaluations == expected
        assert result.n_target_evals == expected
        assert result.final_log_w.size == expected

    def test_perfect_proposal_stops_at_first_stage(self, rng):
        target = GaussianIIDTarget(1.0, 2.0, 3)
        theta = MixtureParams(weights=[1.0], means=[[1.0, 1.0, 1.0]], variances=[[2.0, 2.0, 2.0]])
        cfg = TamisConfig(sample_size=500, ess_min=100, ess_predefined=499, max_iterations=10)
        result = run_tamis(target, theta, cfg, rng)
        assert result.iterations == 1
        assert result.stop_reason == STOP_ESS_REACHED
        record = result.records[0]
        assert record.ess_t == pytest.approx(500.0)
        assert not record.calibrated
        assert record.s_log_t == -math.inf
        assert record.trace_row()['beta_t'] == 'nan'
        assert result.calibrated_betas().size == 0

    def test_stops_at_max_iterations(self, offset_target, wide_start, rng):
        cfg = TamisConfig(sample_size=200, ess_min=50, ess_predefined=10 * 5 * 200, max_iterations=5)
        result = run_tamis(offset_target, wide_start, cfg, rng)
        assert result.iterations == 5
        assert result.stop_reason == STOP_MAX_ITERATIONS

    def test_cumulative_ess_stop(self, offset_target, wide_start, rng):
        cfg = TamisConfig(sample_size=300, ess_min=60, tau=0.4, ess_predefined=600, max_iterations=40)
        result = run_tamis(offset_target, wide_start, cfg, rng)
        cumulative = np.cumsum([record.ess_t for record in result.records])
        assert cumulative[-1] > 600
        assert np.all(cumulative[:-1] <= 600)
        assert result.stop_reason == STOP_ESS_REACHED

    def test_trace_invariants(self, offset_target, wide_start, rng):
        cfg = TamisConfig(sample_size=300, ess_min=60, tau=0.4, max_iterations=8)
        result = run_tamis(offset_target, wide_start, cfg, rng)
        for record in result.records:
            assert 0.0 < record.beta_t <= 1.0
            assert 0.0 <= record.kl_hat_t <= math.log(300) + 1e-12
            assert 1.0 <= record.ess_t <= 300
        assert [record.t for record in result.records] == list(range(1, result.iterations + 1))

    def test_same_seed_same_run(self, offset_target, wide_start):
        cfg = TamisConfig(sample_size=200, ess_min=50, max_iterations=4)
        a = run_tamis(offset_target, wide_start, cfg, np.random.default_rng(5))
        b = run_tamis(GaussianIIDTarget(3.0, 0.5, 2), wide_start, cfg, np.random.default_rng(5))
        assert a.trace_rows() == b.trace_rows()
        np.testing.assert_array_equal(a.final_log_w.log_w, b.final_log_w.log_w)

    def test_estimates_converge(self, rng):
        target = GaussianIIDTarget(3.0, 0.5, 2)
        theta = MixtureParams(weights=[0.5, 0.5], means=[[-1.0, 0.0], [1.0, 1.0]], variances=[[10.0, 10.0]] * 2)
        cfg = TamisConfig(sample_size=1000, ess_min=200, tau=0.4, ess_predefined=5000, max_iterations=40)
        result = run_tamis(target, theta, cfg, rng)
        np.testing.assert_allclose(result.estimate_mean(), [3.0, 3.0], atol=0.1)
        np.testing.assert_allclose(result.estimate_variances(), [0.5, 0.5], atol=0.1)
        assert result.convergence_iteration() is not None

    def test_ess_min_clamped_to_stage_size(self, offset_target, wide_start, rng):
        cfg = TamisConfig(sample_size=100, ess_min=1000, max_iterations=3)
        result = run_tamis(offset_target, wide_start, cfg, rng)
        assert result.iterations == 3

    def test_dimension_mismatch(self, wide_start, rng):
        with pytest.raises(ContractViolation):
            run_tamis(GaussianIIDTarget(0.0, 1.0, 3), wide_start, TamisConfig(), rng)

    def test_rosenbrock_run(self, rng):
        target = RosenbrockTarget(100.0, 0.03, 2)
        theta = MixtureParams(weights=np.full(3, 1 / 3), means=rng.uniform(-4, 4, (3, 2)),
                              variances=np.full((3, 2), 200.0))
        result = run_tamis(target, theta, TamisConfig(sample_size=500, ess_min=80, max_iterations=6), rng)
        assert np.all(np.isfinite(result.final_log_w.log_w))
        assert result.final_ess >= 1.0


class TestNpmcRun:
    def test_follows_ladder(self, offset_target, wide_start, rng):
        cfg = TamisConfig(sample_size=200, ess_min=50, max_iterations=6, npmc_ladder=3.0)
        result = run_npmc(offset_target, wide_start, cfg, rng)
        for record in result.records[:-1]:
            assert record.beta_t == pytest.approx(npmc_beta_schedule(record.t, 3.0))
            assert record.s_log_t == -math.inf
        assert offset_target.n_evaluations == 6 * 200
        assert result.algorithm == 'npmc'
        assert NPMCSampler(cfg).notes()


class TestAmisRun:
    def test_single_stage_matches_tamis(self, offset_target, wide_start):
        cfg = TamisConfig(sample_size=300, ess_min=50, max_iterations=1)
        amis = run_amis(offset_target, wide_start, cfg, np.random.default_rng(8))
        tamis = run_tamis(GaussianIIDTarget(3.0, 0.5, 2), wide_start, cfg, np.random.default_rng(8))
        np.testing.assert_array_equal(amis.final_log_w.log_w, tamis.final_log_w.log_w)
        assert amis.final_ess == tamis.final_ess

    def test_never_tempers(self, offset_target, wide_start, rng):
        result = run_amis(offset_target, wide_start, TamisConfig(sample_size=200, ess_min=50, max_iterations=4), rng)
        assert all(record.beta_t == 1.0 for record in result.records)
        assert all(record.pooled_ess is not None for record in result.records)
        assert offset_target.n_evaluations == 800

    def test_perfect_proposal_pools_ess(self, rng):
        target = GaussianIIDTarget(0.0, 1.0, 2)
        theta = MixtureParams(weights=[1.0], means=[[0.0, 0.0]], variances=[[1.0, 1.0]])
        result = AMISSampler(TamisConfig(sample_size=200, ess_min=50, max_iterations=3)).run(target, theta, rng)
        assert result.final_ess <= 600 + 1e-9
        assert result.final_ess > 0.8 * 600


class TestSamplerClasses:
    def test_registry_names(self):
        assert TamisSampler.algorithm == 'tamis'
        assert NPMCSampler.algorithm == 'npmc'
        assert AMISSampler.algorithm == 'amis'
