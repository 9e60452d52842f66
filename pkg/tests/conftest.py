import os
import sys

import numpy as np
import pytest

from tamis.models import InitSpec, MixtureParams, TamisConfig

FIXTURES = os.path.join(os.path.dirname(__file__), 'fixtures')


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def normal_target_command():
    return (sys.executable, os.path.join(FIXTURES, 'normal_target.py'))


@pytest.fixture
def small_mixture():
    return MixtureParams(
        weights=[0.3, 0.7],
        means=[[-2.0, 0.0], [1.0, 1.5]],
        variances=[[1.0, 0.5], [2.0, 1.0]],
    )


@pytest.fixture
def small_config():
    """Fast sampler settings for 2-d runs"""
    return TamisConfig(sample_size=400, ess_min=100, tau=0.4, max_iterations=6)


@pytest.fixture
def experiment_dict(tmp_path):
    return {
        'experiment': 'unit',
        'target': {'kind': 'gaussian_iid', 'mean': 2.0, 'variance': 1.5, 'dim': 2},
        'init': {
            'components': 2,
            'means': {'kind': 'uniform', 'low': -4, 'high': 4},
            'covariance': {'kind': 'scaled_identity', 'scale': 20},
        },
        'algorithm': 'tamis',
        'sample_size': 300,
        'ess_min': 60,
        'tau': 0.4,
        'stop': {'ess_predefined': 1500, 'max_iterations': 8},
        'replicates': 2,
        'seed': 7,
        'output_dir': str(tmp_path / 'out'),
    }


@pytest.fixture
def blind_init():
    return InitSpec(
        components=2,
        means={'kind': 'uniform', 'low': -4, 'high': 4},
        covariance={'kind': 'scaled_identity', 'scale': 20},
    )
