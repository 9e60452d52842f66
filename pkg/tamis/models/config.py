"""Configuration containers for samplers and experiments.

Experiment files are JSON documents; :meth:`ExperimentConfig.from_dict`
rejects unknown keys and names the offending key in every error. The
accepted layout::

    {
      "experiment": "E3.1",
      "target": {"kind": "gaussian_iid", "mean": 50, "variance": 5, "dim": 50},
      "init": {"components": 5,
               "means": {"kind": "uniform", "low": -4, "high": 4},
               "covariance": {"kind": "scaled_identity", "scale": 200}},
      "algorithm": "tamis",               # or a list for paired comparisons
      "sample_size": 2000,                # or a per-stage list
      "ess_min": 100,
      "tau": 0.0,
      "stop": {"ess_predefined": 10000, "max_iterations": 500},
      "replicates": 20,
      "seed": 1,
      "output_dir": "results/e3_1",
      "sweep": {"parameter": "ess_min", "values": [100, 200, 1400]},   # or a list of sweeps
      "em": {"max_steps": 10, "rel_tol": 1e-6},
      "resample": {"scheme": "systematic", "size": null},
      "npmc_ladder": 5,
      "blackbox_workers": 1
    }
"""
import itertools
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ConfigurationError
from .mixture import MixtureParams

logger = logging.getLogger(__name__)

TARGET_KINDS = ('gaussian_iid', 'rosenbrock', 'blackbox')
ALGORITHMS = ('tamis', 'amis', 'npmc')
RESAMPLE_SCHEMES = ('systematic', 'multinomial', 'residual')


def _reject_unknown(section: str, data: Dict[str, Any], allowed: Sequence[str]) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def _require(section: str, data: Dict[str, Any], key: str) -> Any:
    if key not in data:
        raise ConfigurationError(f"missing required key '{key}' in {section}")
    return data[key]


def _padded_diagonal(head: Sequence[float], fill: Optional[float], dim: int, section: str) -> np.ndarray:
    head = [float(v) for v in head]
    if len(head) > dim:
        raise ConfigurationError(f"{section}: {len(head)} diagonal entries for dimension {dim}")
    if len(head) < dim and fill is None:
        raise ConfigurationError(f"{section}: diagonal shorter than dimension {dim} and no 'fill'")
    values = np.array(head + [float(fill)] * (dim - len(head)) if fill is not None else head)
    if np.any(values <= 0):
        raise ConfigurationError(f"{section}: diagonal entries must be positive")
    return values


@dataclass(frozen=True)
class TargetSpec:
    kind: str
    dim: int
    mean: float = 0.0
    variance: float = 1.0
    sigma2: float = 100.0
    b: float = 0.03
    command: Tuple[str, ...] = ()

    def validate(self) -> 'TargetSpec':
        if self.kind not in TARGET_KINDS:
            raise ConfigurationError(f"target.kind must be one of {TARGET_KINDS}, got '{self.kind}'")
        if self.dim < 1:
            raise ConfigurationError("target.dim must be >= 1")
        if self.kind == 'gaussian_iid' and not self.variance > 0:
            raise ConfigurationError("target.variance must be > 0")
        if self.kind == 'rosenbrock':
            if not self.sigma2 > 0:
                raise ConfigurationError("target.sigma2 must be > 0")
            if self.dim < 2:
                raise ConfigurationError("target.dim must be >= 2 for rosenbrock")
        if self.kind == 'blackbox' and not self.command:
            raise ConfigurationError("target.command is required for blackbox targets")
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TargetSpec':
        _reject_unknown('target', data, ('kind', 'dim', 'mean', 'variance', 'sigma2', 'b', 'command'))
        kind = _require('target', data, 'kind')
        command = data.get('command', ())
        if isinstance(command, str):
            command = tuple(command.split())
        spec = cls(
            kind=kind,
            dim=int(_require('target', data, 'dim')),
            mean=float(data.get('mean', 0.0)),
            variance=float(data.get('variance', 1.0)),
            sigma2=float(data.get('sigma2', 100.0)),
            b=float(data.get('b', 0.03)),
            command=tuple(command),
        )
        return spec.validate()


@dataclass(frozen=True)
class InitSpec:
    """How the first proposal θ_1 is drawn.

    ``means`` kinds: ``uniform`` (low, high), ``normal`` (N(0, diag/divisor)
    with ``diagonal`` head padded by ``fill``), ``fixed`` (explicit K×d list).
    ``covariance`` kinds: ``scaled_identity`` (scale) or ``diagonal``
    (``values`` head padded by ``fill``); every component shares it.
    """
    components: int
    means: Dict[str, Any]
    covariance: Dict[str, Any]

    def validate(self, dim: int) -> 'InitSpec':
        if self.components < 1:
            raise ConfigurationError("init.components must be >= 1")
        kind = self.means.get('kind')
        if kind == 'uniform':
            _reject_unknown('init.means', self.means, ('kind', 'low', 'high'))
            if not float(self.means.get('low', -4.0)) < float(self.means.get('high', 4.0)):
                raise ConfigurationError("init.means: low must be < high")
        elif kind == 'normal':
            _reject_unknown('init.means', self.means, ('kind', 'diagonal', 'fill', 'divisor'))
            _padded_diagonal(self.means.get('diagonal', []), self.means.get('fill'), dim, 'init.means')
            if not float(self.means.get('divisor', 1.0)) > 0:
                raise ConfigurationError("init.means.divisor must be > 0")
        elif kind == 'fixed':
            _reject_unknown('init.means', self.means, ('kind', 'values'))
            values = np.asarray(_require('init.means', self.means, 'values'), dtype=float)
            if values.shape != (self.components, dim):
                raise ConfigurationError(
                    f"init.means.values must have shape ({self.components}, {dim}), got {values.shape}"
                )
        else:
            raise ConfigurationError(f"init.means.kind must be uniform, normal or fixed, got '{kind}'")
        self.covariance_diagonal(dim)
        return self

    def covariance_diagonal(self, dim: int) -> np.ndarray:
        kind = self.covariance.get('kind')
        if kind == 'scaled_identity':
            _reject_unknown('init.covariance', self.covariance, ('kind', 'scale'))
            scale = float(_require('init.covariance', self.covariance, 'scale'))
            if not scale > 0:
                raise ConfigurationError("init.covariance.scale must be > 0")
            return np.full(dim, scale)
        if kind == 'diagonal':
            _reject_unknown('init.covariance', self.covariance, ('kind', 'values', 'fill'))
            return _padded_diagonal(_require('init.covariance', self.covariance, 'values'),
                                    self.covariance.get('fill'), dim, 'init.covariance')
        raise ConfigurationError(
            f"init.covariance.kind must be scaled_identity or diagonal, got '{kind}'"
        )

    def build(self, dim: int, rng: np.random.Generator) -> MixtureParams:
        """Draw θ_1: equal weights, random means, a shared diagonal covariance"""
        variances = np.tile(self.covariance_diagonal(dim), (self.components, 1))
        kind = self.means['kind']
        if kind == 'uniform':
            means = rng.uniform(float(self.means.get('low', -4.0)), float(self.means.get('high', 4.0)),
                                size=(self.components, dim))
        elif kind == 'normal':
            diag = _padded_diagonal(self.means.get('diagonal', []), self.means.get('fill'), dim, 'init.means')
            scale = np.sqrt(diag / float(self.means.get('divisor', 1.0)))
            means = scale * rng.standard_normal((self.components, dim))
        else:
            means = np.asarray(self.means['values'], dtype=float)
        weights = np.full(self.components, 1.0 / self.components)
        return MixtureParams(weights=weights, means=means, variances=variances)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'InitSpec':
        _reject_unknown('init', data, ('components', 'means', 'covariance'))
        return cls(
            components=int(_require('init', data, 'components')),
            means=dict(_require('init', data, 'means')),
            covariance=dict(_require('init', data, 'covariance')),
        )


@dataclass(frozen=True)
class TamisConfig:
    """Settings of one adaptive run.

    ``sample_size`` is either a constant N_t or a per-stage list (the last
    entry repeats once the list is exhausted). ``ess_predefined`` is the
    cumulative-ESS stop threshold; ``math.inf`` leaves only ``max_iterations``.
    ``seed`` feeds the random stream when a run is started without a generator.
    """
    sample_size: Union[int, Tuple[int, ...]] = 2000
    ess_min: float = 1000.0
    tau: float = 0.4
    ess_predefined: float = math.inf
    max_iterations: int = 100
    bisection_tol: float = 1e-6
    bisection_max_iter: int = 100
    em_max_steps: int = 10
    em_rel_tol: float = 1e-6
    resample_scheme: str = 'systematic'
    resample_size: Optional[int] = None
    npmc_ladder: float = 5.0
    seed: Optional[int] = None

    def stage_size(self, t: int) -> int:
        """N_t for the 1-based stage index ``t``"""
        if isinstance(self.sample_size, (tuple, list)):
            return int(self.sample_size[min(t, len(self.sample_size)) - 1])
        return int(self.sample_size)

    def validate(self) -> 'TamisConfig':
        if not 0.0 <= self.tau < 1.0:
            raise ConfigurationError(f"tau must lie in [0, 1), got {self.tau}")
        sizes = self.sample_size if isinstance(self.sample_size, (tuple, list)) else (self.sample_size,)
        if not sizes or any(int(n) < 1 for n in sizes):
            raise ConfigurationError("sample_size entries must be >= 1")
        if not self.ess_min >= 1.0:
            raise ConfigurationError(f"ess_min must be >= 1, got {self.ess_min}")
        if self.max_iterations < 1:
            raise ConfigurationError("stop.max_iterations must be >= 1")
        if not self.ess_predefined > 0:
            raise ConfigurationError("stop.ess_predefined must be > 0")
        if not self.bisection_tol > 0 or self.bisection_max_iter < 1:
            raise ConfigurationError("bisection tolerance must be > 0 with at least one iteration")
        if self.em_max_steps < 1 or not self.em_rel_tol >= 0:
            raise ConfigurationError("em.max_steps must be >= 1 and em.rel_tol >= 0")
        if self.resample_scheme not in RESAMPLE_SCHEMES:
            raise ConfigurationError(f"resample.scheme must be one of {RESAMPLE_SCHEMES}")
        if self.resample_size is not None and self.resample_size < 1:
            raise ConfigurationError("resample.size must be >= 1")
        if self.npmc_ladder < 0:
            raise ConfigurationError("npmc_ladder must be >= 0")
        return self

    def check_against(self, n_components: int, dim: int) -> None:
        """Warn when 2Kd ≪ ESS_min ≤ N_t does not hold; never fails"""
        if 2 * n_components * dim >= self.ess_min:
            logger.warning("ess_min=%g is not well above 2Kd=%d; EM refits may be unstable",
                           self.ess_min, 2 * n_components * dim)
        smallest = min(self.stage_size(t) for t in range(1, self.max_iterations + 1)) \
            if isinstance(self.sample_size, (tuple, list)) else self.stage_size(1)
        if self.ess_min > smallest:
            logger.warning("ess_min=%g exceeds the smallest stage size %d", self.ess_min, smallest)


SAMPLER_SWEEPABLE = tuple(f.name for f in fields(TamisConfig) if f.name != 'seed')
TARGET_SWEEPABLE = ('target.dim', 'target.mean', 'target.variance', 'target.sigma2', 'target.b')
INIT_SWEEPABLE = ('init.components', 'init.means', 'init.covariance')
SWEEPABLE = SAMPLER_SWEEPABLE + TARGET_SWEEPABLE + INIT_SWEEPABLE


@dataclass(frozen=True)
class Sweep:
    """One swept parameter; ``labels`` name the values in file names and reports"""
    parameter: str
    values: Tuple[Any, ...]
    labels: Tuple[str, ...] = ()

    def validate(self) -> 'Sweep':
        if self.parameter not in SWEEPABLE:
            raise ConfigurationError(
                f"sweep.parameter '{self.parameter}' is not a sampler, target or init setting"
            )
        if not self.values:
            raise ConfigurationError(f"sweep.values must not be empty for '{self.parameter}'")
        if self.labels and len(self.labels) != len(self.values):
            raise ConfigurationError(f"sweep.labels for '{self.parameter}' must match sweep.values in length")
        return self

    def label(self, index: int) -> str:
        if self.labels:
            return str(self.labels[index])
        value = self.values[index]
        if isinstance(value, (dict, list)):
            value = json.dumps(value, sort_keys=True, separators=(',', ':'))
        return f"{self.parameter}={value}"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Sweep':
        _reject_unknown('sweep', data, ('parameter', 'values', 'labels'))
        return cls(
            parameter=str(_require('sweep', data, 'parameter')),
            values=tuple(_require('sweep', data, 'values')),
            labels=tuple(str(label) for label in data.get('labels', ())),
        ).validate()


@dataclass(frozen=True)
class Setting:
    """One point of the sweep grid: everything a replicate needs besides its seed"""
    label: str
    sampler: TamisConfig
    target: TargetSpec
    init: InitSpec


def _apply(setting: Setting, parameter: str, value: Any) -> Setting:
    if parameter in SAMPLER_SWEEPABLE:
        return replace(setting, sampler=replace(setting.sampler, **{parameter: value}))
    section, name = parameter.split('.', 1)
    try:
        if section == 'target':
            value = int(value) if name == 'dim' else float(value)
            return replace(setting, target=replace(setting.target, **{name: value}))
        value = int(value) if name == 'components' else dict(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"sweep value {value!r} does not fit {parameter}") from exc
    return replace(setting, init=replace(setting.init, **{name: value}))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    target: TargetSpec
    init: InitSpec
    algorithms: Tuple[str, ...]
    sampler: TamisConfig
    replicates: int = 1
    seed: int = 0
    output_dir: str = 'results'
    sweeps: Tuple[Sweep, ...] = ()
    blackbox_workers: int = 1
    raw: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def settings(self) -> List[Setting]:
        """Every point of the sweep grid, or a single 'default' setting.

        Several sweeps combine as a product, the first one varying slowest;
        labels are joined with commas.
        """
        base = Setting('default', self.sampler, self.target, self.init)
        if not self.sweeps:
            return [base]
        grid = []
        for indices in itertools.product(*(range(len(sweep.values)) for sweep in self.sweeps)):
            setting = base
            for sweep, i in zip(self.sweeps, indices):
                setting = _apply(setting, sweep.parameter, sweep.values[i])
            label = ','.join(sweep.label(i) for sweep, i in zip(self.sweeps, indices))
            grid.append(replace(setting, label=label))
        return grid

    def validate(self) -> 'ExperimentConfig':
        if self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")
        if self.blackbox_workers < 1:
            raise ConfigurationError("blackbox_workers must be >= 1")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got '{name}'")
        for sweep in self.sweeps:
            sweep.validate()
        for setting in self.settings():
            try:
                setting.target.validate()
                setting.init.validate(setting.target.dim)
                setting.sampler.validate()
            except ConfigurationError as exc:
                raise ConfigurationError(f"setting '{setting.label}': {exc}") from exc
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        _reject_unknown('experiment config', data, (
            'experiment', 'target', 'init', 'algorithm', 'sample_size', 'ess_min', 'tau', 'stop',
            'replicates', 'seed', 'output_dir', 'sweep', 'em', 'resample', 'npmc_ladder',
            'blackbox_workers',
        ))
        try:
            stop = dict(data.get('stop', {}))
            _reject_unknown('stop', stop, ('ess_predefined', 'max_iterations'))
            em = dict(data.get('em', {}))
            _reject_unknown('em', em, ('max_steps', 'rel_tol'))
            resample = dict(data.get('resample', {}))
            _reject_unknown('resample', resample, ('scheme', 'size'))
            sweep = data.get('sweep') or []
            sweeps = tuple(Sweep.from_dict(dict(entry)) for entry in (sweep if isinstance(sweep, list) else [sweep]))

            sample_size = _require('experiment config', data, 'sample_size')
            if isinstance(sample_size, list):
                sample_size = tuple(int(n) for n in sample_size)
            ess_predefined = stop.get('ess_predefined')
            seed = int(data.get('seed', 0))

            sampler = TamisConfig(
                sample_size=sample_size,
                ess_min=float(_require('experiment config', data, 'ess_min')),
                tau=float(data.get('tau', 0.4)),
                ess_predefined=math.inf if ess_predefined is None else float(ess_predefined),
                max_iterations=int(stop.get('max_iterations', 100)),
                em_max_steps=int(em.get('max_steps', 10)),
                em_rel_tol=float(em.get('rel_tol', 1e-6)),
                resample_scheme=resample.get('scheme', 'systematic'),
                resample_size=None if resample.get('size') is None else int(resample['size']),
                npmc_ladder=float(data.get('npmc_ladder', 5.0)),
            )
            algorithm = data.get('algorithm', 'tamis')
            algorithms = tuple(algorithm) if isinstance(algorithm, list) else (algorithm,)

            config = cls(
                experiment=str(_require('experiment config', data, 'experiment')),
                target=TargetSpec.from_dict(dict(_require('experiment config', data, 'target'))),
                init=InitSpec.from_dict(dict(_require('experiment config', data, 'init'))),
                algorithms=algorithms,
                sampler=sampler,
                replicates=int(data.get('replicates', 1)),
                seed=seed,
                output_dir=str(data.get('output_dir', 'results')),
                sweeps=sweeps,
                blackbox_workers=int(data.get('blackbox_workers', 1)),
                raw=dict(data),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid experiment config: {exc}") from exc
        return config.validate()

    @classmethod
    def load(cls, path: str) -> 'ExperimentConfig':
        try:
            with open(path, 'r') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)
