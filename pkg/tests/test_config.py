import math
import os

import numpy as np
import pytest

from tamis.exceptions import ConfigurationError
from tamis.models import ExperimentConfig, InitSpec, TamisConfig, TargetSpec

CONFIGS = os.path.join(os.path.dirname(__file__), '..', 'configs')


class TestTamisConfig:
    def test_defaults_validate(self):
        cfg = TamisConfig().validate()
        assert cfg.tau == 0.4
        assert cfg.ess_predefined == math.inf

    @pytest.mark.parametrize('tau', [1.0, -0.1, 1.5])
    def test_tau_contract(self, tau):
        with pytest.raises(ConfigurationError, match=r'tau must lie in \[0, 1\)'):
            TamisConfig(tau=tau).validate()

    def test_stage_sizes_repeat_last(self):
        cfg = TamisConfig(sample_size=(100, 200, 300))
        assert [cfg.stage_size(t) for t in range(1, 6)] == [100, 200, 300, 300, 300]

    @pytest.mark.parametrize('kwargs', [
        dict(sample_size=0), dict(ess_min=0.5), dict(max_iterations=0), dict(resample_scheme='stratified'),
        dict(em_max_steps=0), dict(npmc_ladder=-1.0), dict(ess_predefined=0.0),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            TamisConfig(**kwargs).validate()

    def test_seed_defaults_to_fresh_entropy(self):
        assert TamisConfig().seed is None
        assert TamisConfig(seed=3).validate().seed == 3

    def test_soft_invariants_only_warn(self, caplog):
        TamisConfig(sample_size=50, ess_min=100).check_against(n_components=5, dim=50)
        messages = ' '.join(record.getMessage() for record in caplog.records)
        assert '2Kd' in messages and 'exceeds' in messages


class TestInitSpec:
    """θ_1 construction from the init section"""

    def test_uniform_means(self, rng):
        spec = InitSpec(5, {'kind': 'uniform', 'low': -4, 'high': 4}, {'kind': 'scaled_identity', 'scale': 200})
        theta = spec.validate(50).build(50, rng)
        assert theta.n_components == 5 and theta.dim == 50
        assert np.all(np.abs(theta.means) <= 4.0)
        np.testing.assert_array_equal(theta.variances, 200.0)
        np.testing.assert_allclose(theta.weights, 0.2)

    def test_padded_diagonal(self, rng):
        spec = InitSpec(5, {'kind': 'normal', 'diagonal': [200, 50], 'fill': 4, 'divisor': 5},
                        {'kind': 'diagonal', 'values': [200, 50], 'fill': 10})
        theta = spec.validate(6).build(6, rng)
        np.testing.assert_array_equal(theta.variances[0], [200, 50, 10, 10, 10, 10])

    def test_fixed_means(self, rng):
        spec = InitSpec(2, {'kind': 'fixed', 'values': [[0, 1], [2, 3]]}, {'kind': 'scaled_identity', 'scale': 1})
        np.testing.assert_array_equal(spec.validate(2).build(2, rng).means, [[0, 1], [2, 3]])

    def test_same_seed_same_theta(self):
        spec = InitSpec(3, {'kind': 'uniform', 'low': -1, 'high': 1}, {'kind': 'scaled_identity', 'scale': 2})
        a = spec.build(4, np.random.default_rng(1))
        b = spec.build(4, np.random.default_rng(1))
        np.testing.assert_array_equal(a.means, b.means)

    @pytest.mark.parametrize('means, covariance', [
        ({'kind': 'uniform', 'low': 4, 'high': -4}, {'kind': 'scaled_identity', 'scale': 1}),
        ({'kind': 'normal', 'diagonal': [1, 2]}, {'kind': 'scaled_identity', 'scale': 1}),
        ({'kind': 'fixed', 'values': [[0, 0, 0]]}, {'kind': 'scaled_identity', 'scale': 1}),
        ({'kind': 'uniform'}, {'kind': 'scaled_identity', 'scale': -1}),
        ({'kind': 'uniform'}, {'kind': 'cholesky'}),
        ({'kind': 'sobol'}, {'kind': 'scaled_identity', 'scale': 1}),
    ])
    def test_rejects(self, means, covariance):
        with pytest.raises(ConfigurationError):
            InitSpec(1, means, covariance).validate(4)


class TestTargetSpec:
    def test_blackbox_needs_command(self):
        with pytest.raises(ConfigurationError):
            TargetSpec('blackbox', 2).validate()

    def test_command_string_is_split(self):
        spec = TargetSpec.from_dict({'kind': 'blackbox', 'dim': 2, 'command': 'python model.py --fast'})
        assert spec.command == ('python', 'model.py', '--fast')

    def test_rosenbrock_needs_two_dimensions(self):
        with pytest.raises(ConfigurationError):
            TargetSpec('rosenbrock', 1).validate()


class TestExperimentConfig:
    def test_from_dict(self, experiment_dict):
        cfg = ExperimentConfig.from_dict(experiment_dict)
        assert cfg.algorithms == ('tamis',)
        assert cfg.sampler.ess_predefined == 1500
        assert [(s.label, s.sampler, s.target) for s in cfg.settings()] == [('default', cfg.sampler, cfg.target)]

    def test_null_ess_predefined_means_no_limit(self, experiment_dict):
        experiment_dict['stop'] = {'ess_predefined': None, 'max_iterations': 3}
        assert ExperimentConfig.from_dict(experiment_dict).sampler.ess_predefined == math.inf

    def test_sweep(self, experiment_dict):
        experiment_dict['sweep'] = {'parameter': 'tau', 'values': [0.0, 0.4, 0.9]}
        settings = ExperimentConfig.from_dict(experiment_dict).settings()
        assert [s.label for s in settings] == ['tau=0.0', 'tau=0.4', 'tau=0.9']
        assert [s.sampler.tau for s in settings] == [0.0, 0.4, 0.9]

    def test_sweep_value_validated(self, experiment_dict):
        experiment_dict['sweep'] = {'parameter': 'tau', 'values': [0.4, 1.0]}
        with pytest.raises(ConfigurationError, match='tau'):
            ExperimentConfig.from_dict(experiment_dict)

    def test_unknown_sweep_parameter(self, experiment_dict):
        experiment_dict['sweep'] = {'parameter': 'seed', 'values': [1]}
        with pytest.raises(ConfigurationError, match='seed'):
            ExperimentConfig.from_dict(experiment_dict)

    def test_sweeps_combine_as_product(self, experiment_dict):
        experiment_dict['sweep'] = [
            {'parameter': 'target.dim', 'values': [2, 5]},
            {'parameter': 'tau', 'values': [0.0, 0.4]},
        ]
        settings = ExperimentConfig.from_dict(experiment_dict).settings()
        assert [s.label for s in settings] == [
            'target.dim=2,tau=0.0', 'target.dim=2,tau=0.4', 'target.dim=5,tau=0.0', 'target.dim=5,tau=0.4']
        assert [(s.target.dim, s.sampler.tau) for s in settings] == [(2, 0.0), (2, 0.4), (5, 0.0), (5, 0.4)]

    def test_covariance_sweep_default_label(self, experiment_dict):
        experiment_dict['sweep'] = {'parameter': 'init.covariance',
                                    'values': [{'kind': 'scaled_identity', 'scale': 50}]}
        (setting,) = ExperimentConfig.from_dict(experiment_dict).settings()
        assert setting.label == 'init.covariance={"kind":"scaled_identity","scale":50}'
        assert setting.init.covariance_diagonal(2).tolist() == [50.0, 50.0]

    def test_swept_setting_is_validated(self, experiment_dict):
        experiment_dict['init']['means'] = {'kind': 'fixed', 'values': [[0.0, 0.0], [1.0, 1.0]]}
        experiment_dict['sweep'] = {'parameter': 'target.dim', 'values': [2, 3]}
        with pytest.raises(ConfigurationError, match='target.dim=3'):
            ExperimentConfig.from_dict(experiment_dict)

    @pytest.mark.parametrize('sweep', [
        {'parameter': 'init.components', 'values': ['many']},
        {'parameter': 'target.dim', 'values': [2], 'labels': ['a', 'b']},
        {'parameter': 'target.kind', 'values': ['rosenbrock']},
    ])
    def test_bad_sweeps(self, experiment_dict, sweep):
        experiment_dict['sweep'] = sweep
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(experiment_dict)

    def test_algorithm_list(self, experiment_dict):
        experiment_dict['algorithm'] = ['tamis', 'amis', 'npmc']
        assert ExperimentConfig.from_dict(experiment_dict).algorithms == ('tamis', 'amis', 'npmc')

    @pytest.mark.parametrize('key, section', [('bogus', None), ('bogus', 'stop'), ('bogus', 'target')])
    def test_unknown_keys_are_named(self, experiment_dict, key, section):
        (experiment_dict[section] if section else experiment_dict)[key] = 1
        with pytest.raises(ConfigurationError, match=key):
            ExperimentConfig.from_dict(experiment_dict)

    def test_missing_key_is_named(self, experiment_dict):
        del experiment_dict['ess_min']
        with pytest.raises(ConfigurationError, match='ess_min'):
            ExperimentConfig.from_dict(experiment_dict)

    def test_replicates_positive(self, experiment_dict):
        experiment_dict['replicates'] = 0
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(experiment_dict)

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"experiment": ')
        with pytest.raises(ConfigurationError):
            ExperimentConfig.load(str(path))

    @pytest.mark.parametrize('name', ['E3_1', 'E3_2', 'E3_3', 'E4_1', 'E4_2', 'E4_3'])
    def test_checked_in_configs_validate(self, name):
        cfg = ExperimentConfig.load(os.path.join(CONFIGS, f'{name}.json'))
        assert cfg.experiment.startswith(name.replace('_', '.')[:4])

    def test_e3_1_parameters(self):
        cfg = ExperimentConfig.load(os.path.join(CONFIGS, 'E3_1.json'))
        assert cfg.target.dim == 50 and cfg.target.mean == 50 and cfg.target.variance == 5
        assert cfg.sampler.stage_size(1) == 2000 and cfg.sampler.tau == 0.0
        assert cfg.sampler.ess_predefined == 10000
        assert [s.label for s in cfg.settings()] == ['ess_min=100', 'ess_min=200', 'ess_min=1400']
