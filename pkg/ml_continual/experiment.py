'''
Experiment driver: split classes, run the init phase, stream the whole
dataset through a learner and write the run report.

Configuration files are flat ``key = value`` lines, ``#`` starts a
comment. Keys
    | ``dataset``, ``eval_dataset``        FSET paths, empty for synthetic data
    | ``synthetic.<field>``                generator parameters, ``synthetic.seed``
    |                                      defaults to a sub-seed of ``seed``
    | ``pretrain_num_classes``             size of the pre-train class set
    | ``stream_mode``                      ``class_incremental`` or ``iid``
    | ``checkpoint_every``                 classes (or examples for iid)
    | ``learner``                          ``slda``, ``replay_softmax``, ``remind``
    | ``learner.<param>``                  learner constructor parameter
    | ``k_list``                           comma separated, i.e. ``1,5``
    | ``output_dir``, ``seed``, ``transfer``, ``feature_source``
'''

import json
import logging
import os
import time
import numpy as np
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple
from .data_loaders.fset import load_dataset
from .data_loaders.synthetic import SyntheticSpec, gen_synthetic_gaussian, \
                                    EVAL_STREAM
from .errors import ConfigError, ExperimentError
from .metrics import RunReport, emit_report
from .models import LEARNERS, create_learner, load_learner
from .pipelines import ContinualPipeline
from .stream import SplitSpec, select_pretrain_classes, \
                    build_class_incremental_stream, build_iid_stream, \
                    CLASS_INCREMENTAL, IID
from .utils import derive_seed, save_json


logger = logging.getLogger(__name__)

SEED_PURPOSES = ['split', 'stream', 'learner', 'synthetic']
_LEARNER_PREFIX = 'learner.'
_SYNTHETIC_PREFIX = 'synthetic.'


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError('not a boolean: {!r}'.format(text))


def _parse_k_list(text: str) -> Tuple[int, ...]:
    return tuple(int(k) for k in text.replace(' ', '').split(',') if k)


def _parse_optional_str(text: str) -> Optional[str]:
    text = text.strip()
    return text if text else None


def _parse_optional_int(text: str) -> Optional[int]:
    text = text.strip()
    return int(text) if text else None


def _parse_param(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text.strip()


@dataclass
class ExperimentConfig:
    dataset: Optional[str] = None
    eval_dataset: Optional[str] = None
    synthetic_num_classes: int = 20
    synthetic_dim: int = 32
    synthetic_examples_per_class: int = 100
    synthetic_eval_examples_per_class: int = 50
    synthetic_class_separation: float = 4.0
    synthetic_noise_scale: float = 1.0
    synthetic_seed: Optional[int] = None
    pretrain_num_classes: int = 5
    stream_mode: str = CLASS_INCREMENTAL
    checkpoint_every: int = 1
    learner: str = 'slda'
    learner_params: Dict = field(default_factory=dict)
    k_list: Tuple[int, ...] = (1, 5)
    output_dir: Optional[str] = None
    seed: int = 0
    transfer: bool = False
    feature_source: str = 'synthetic'

    _PARSERS = {
        'dataset': _parse_optional_str,
        'eval_dataset': _parse_optional_str,
        'output_dir': _parse_optional_str,
        'synthetic_seed': _parse_optional_int,
        'k_list': _parse_k_list,
        'transfer': _parse_bool,
        'stream_mode': str.strip,
        'learner': str.strip,
        'feature_source': str.strip,
    }

    @classmethod
    def from_file(cls, path: str,
                  overrides: Optional[List[str]]=None) -> 'ExperimentConfig':
        '''
        Parse a config file and apply ``key=value`` overrides

        Parameters
        ----------
        path:
            config file
        overrides:
            ``key=value`` strings applied after the file
        '''
        if not os.path.exists(path):
            raise ConfigError('config file not found: {}'.format(path))
        with open(path) as f:
            lines = f.readlines()

        return cls.from_lines(lines + list(overrides or []))

    @classmethod
    def from_lines(cls, lines: List[str]) -> 'ExperimentConfig':
        cfg = cls()
        for line_no, line in enumerate(lines, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError('line {}: expected key = value, got {!r}'
                                  .format(line_no, line))
            key, value = line.split('=', 1)
            cfg.set(key.strip(), value.strip())

        return cfg

    def set(self, key: str, value: str):
        '''
        Assign one documented key from its text value
        '''
        if key.startswith(_LEARNER_PREFIX):
            self.learner_params[key[len(_LEARNER_PREFIX):]] = \
                _parse_param(value)
            return
        attr = key.replace('.', '_') if key.startswith(_SYNTHETIC_PREFIX) \
               else key
        known = {f.name: f for f in fields(self)}
        if attr not in known or attr == 'learner_params' or \
                (attr.startswith('synthetic_') and
                 not key.startswith(_SYNTHETIC_PREFIX)):
            raise ConfigError('unknown config key {!r}'.format(key))
        parser = self._PARSERS.get(attr, known[attr].type)
        try:
            setattr(self, attr, parser(value))
        except (TypeError, ValueError) as exc:
            raise ConfigError('bad value {!r} for {}: {}'.format(
                                value, key, exc))

    def validate(self):
        if self.stream_mode not in (CLASS_INCREMENTAL, IID):
            raise ConfigError('stream_mode must be {!r} or {!r}'.format(
                                CLASS_INCREMENTAL, IID))
        if self.learner not in LEARNERS:
            raise ConfigError('unknown learner {!r}, expected one of {}'
                              .format(self.learner, sorted(LEARNERS)))
        if self.checkpoint_every < 1:
            raise ConfigError('checkpoint_every must be positive')
        if not self.k_list or min(self.k_list) < 1:
            raise ConfigError('k_list must hold positive integers')
        if self.transfer and self.learner == 'remind':
            raise ConfigError('remind needs a pre-train phase, '
                              'transfer mode is not available')
        if not self.transfer and self.pretrain_num_classes < 1:
            raise ConfigError('pretrain_num_classes must be positive')
        for path in [self.dataset, self.eval_dataset]:
            if path is not None and not os.path.exists(path):
                raise ConfigError('dataset not found: {}'.format(path))
        if self.dataset is not None and self.eval_dataset is None:
            raise ConfigError('eval_dataset is required with dataset')

    def seeds(self) -> Dict[str, int]:
        return {purpose: derive_seed(self.seed, purpose)
                for purpose in SEED_PURPOSES}

    def synthetic_spec(self) -> SyntheticSpec:
        seed = self.seeds()['synthetic'] if self.synthetic_seed is None \
               else self.synthetic_seed
        return SyntheticSpec(self.synthetic_num_classes,
                             self.synthetic_dim,
                             self.synthetic_examples_per_class,
                             self.synthetic_class_separation,
                             self.synthetic_noise_scale, seed)

    def to_dict(self) -> Dict:
        '''
        Config echo with file keys and derived sub-seeds.
        ``output_dir`` is left out so reports do not depend on it.
        '''
        result = {}
        for f in fields(self):
            if f.name in ('learner_params', 'output_dir'):
                continue
            key = f.name
            if key.startswith('synthetic_'):
                key = 'synthetic.' + key[len('synthetic_'):]
            value = getattr(self, f.name)
            result[key] = list(value) if isinstance(value, tuple) else value
        for name, value in self.learner_params.items():
            result[_LEARNER_PREFIX + name] = value
        result['seeds'] = self.seeds()

        return result


@contextmanager
def _phase(name: str):
    logger.info('Phase: %s', name)
    try:
        yield
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(name, exc) from exc


def load_experiment_data(cfg: ExperimentConfig):
    '''
    Returns
    -------
    ``(train, eval_set)`` datasets of the experiment
    '''
    if cfg.dataset is not None:
        train = load_dataset(cfg.dataset)
        eval_set = load_dataset(cfg.eval_dataset)
    else:
        spec = cfg.synthetic_spec()
        train = gen_synthetic_gaussian(spec)
        eval_set = gen_synthetic_gaussian(
                        spec, EVAL_STREAM,
                        cfg.synthetic_eval_examples_per_class)
    if train.dim != eval_set.dim:
        raise ValueError('train dim {} differs from eval dim {}'.format(
                            train.dim, eval_set.dim))

    return train, eval_set


def write_run_outputs(report: RunReport, output_dir: str):
    '''
    Write ``report.json``, ``curve.csv`` and ``timing.json``
    into ``output_dir``
    '''
    emit_report(report, os.path.join(output_dir, 'report.json'), 'json')
    emit_report(report, os.path.join(output_dir, 'curve.csv'), 'csv')
    save_json(os.path.join(output_dir, 'timing.json'),
              {'wall_clock_seconds': report.wall_clock_seconds})


def run_experiment(cfg: ExperimentConfig, init_snapshot: Optional[str]=None,
                   resume_from: Optional[str]=None,
                   verbose: bool=False) -> RunReport:
    '''
    Run the pre-train-then-stream protocol

    Parameters
    ----------
    cfg:
        experiment configuration
    init_snapshot:
        write the learner snapshot here once the init phase is done
    resume_from:
        skip the init phase and continue from this learner snapshot
    verbose:
        show progress bars

    Returns
    -------
    :class:`~ml_continual.metrics.RunReport`, also written to
    ``cfg.output_dir`` when it is set
    '''
    start = time.time()
    with _phase('config'):
        cfg.validate()
        seeds = cfg.seeds()
    with _phase('data'):
        train, eval_set = load_experiment_data(cfg)
    with _phase('split'):
        if cfg.transfer:
            pretrain = np.zeros(0, dtype=np.int64)
        else:
            split = SplitSpec(cfg.pretrain_num_classes, seeds['split'])
            pretrain, _ = select_pretrain_classes(train.num_classes, split,
                                                  allow_all=True)
        if cfg.stream_mode == IID:
            plan = build_iid_stream(train, seeds['stream'],
                                    cfg.checkpoint_every)
        else:
            plan = build_class_incremental_stream(train, pretrain,
                                                  seeds['stream'],
                                                  cfg.checkpoint_every)
    with _phase('init'):
        if resume_from is not None:
            learner = load_learner(resume_from)
            if learner.kind != cfg.learner:
                raise ConfigError('snapshot holds {!r}, config asks for {!r}'
                                  .format(learner.kind, cfg.learner))
        else:
            learner = create_learner(cfg.learner, train.dim,
                                     cfg.learner_params, seeds['learner'])
        pipeline = ContinualPipeline(learner, eval_set, cfg.k_list,
                                     cfg.feature_source, len(pretrain),
                                     verbose)
        if resume_from is None and not cfg.transfer:
            info = pipeline.fit(train, pretrain)
            logger.info('Init phase done: %s', info)
        if init_snapshot is not None:
            pipeline.export_core(init_snapshot)
    with _phase('stream'):
        curve = pipeline.execute(train, plan)

    report = RunReport(cfg.to_dict(), curve, time.time() - start)
    if cfg.output_dir is not None:
        with _phase('report'):
            write_run_outputs(report, cfg.output_dir)

    return report
