import argparse
import os
import numpy as np
import pandas as pd
from typing import Dict, Optional
from ml_continual.utils import load_config, check_create_folder
from ml_continual.data_loaders.synthetic import SyntheticSpec, \
                                               gen_synthetic_gaussian, \
                                               EVAL_STREAM
from ml_continual.experiment import ExperimentConfig, run_experiment
from ml_continual.linear_eval import OfflineTrainConfig, \
                                    OfflineLinearClassifier
from ml_continual.metrics import evaluate_topk, relative_improvement


NUM_CLASSES = 20
DIM = 32
EXAMPLES_PER_CLASS = 100
EVAL_EXAMPLES_PER_CLASS = 50
CLASS_SEPARATION = 4.0
NOISE_SCALE = 1.0
SEED = 7
PRETRAIN_NUM_CLASSES = 10
# pre-train class counts of the size sweep, smallest to largest
PRETRAIN_SIZES = (2, 3, 5, 10, 15)
CHECKPOINT_EVERY = 5
REMIND_PARAMS = {'num_subspaces': 8, 'codebook_size': 64,
                 'replay_size': 50, 'mixup_alpha': 0.1}
UPPER_BOUND_EPOCHS = 30
OUT_NAME = 'synthetic_benchmark'

# method name -> (learner kind, learner params)
METHODS = {
    'slda': ('slda', {}),
    'replay_softmax': ('replay_softmax', {}),
    'replay_softmax_no_replay': ('replay_softmax', {'capacity': 0}),
    'remind': ('remind', REMIND_PARAMS),
    'remind_no_replay': ('remind', dict(REMIND_PARAMS, replay_size=0)),
}


def benchmark_spec() -> SyntheticSpec:
    return SyntheticSpec(NUM_CLASSES, DIM, EXAMPLES_PER_CLASS,
                         CLASS_SEPARATION, NOISE_SCALE, SEED)


def SyntheticBenchmark():
    '''
    Standard synthetic class-incremental benchmark: 20 Gaussian
    classes in 32 dimensions, 100 training examples per class.

    Returns
    -------
    ``(train, eval_set)``
        :class:`~ml_continual.data_loaders.fset.FeatureDataset` pair
        sharing class means
    '''
    spec = benchmark_spec()
    train = gen_synthetic_gaussian(spec)
    eval_set = gen_synthetic_gaussian(spec, EVAL_STREAM,
                                      EVAL_EXAMPLES_PER_CLASS)

    return train, eval_set


def benchmark_config(learner: str, learner_params: Optional[Dict]=None,
                     output_dir: Optional[str]=None,
                     pretrain_num_classes: int=PRETRAIN_NUM_CLASSES
                     ) -> ExperimentConfig:
    '''
    Experiment config of one learner on the benchmark
    '''
    return ExperimentConfig(
                synthetic_num_classes=NUM_CLASSES,
                synthetic_dim=DIM,
                synthetic_examples_per_class=EXAMPLES_PER_CLASS,
                synthetic_eval_examples_per_class=EVAL_EXAMPLES_PER_CLASS,
                synthetic_class_separation=CLASS_SEPARATION,
                synthetic_noise_scale=NOISE_SCALE,
                synthetic_seed=SEED,
                pretrain_num_classes=pretrain_num_classes,
                checkpoint_every=CHECKPOINT_EVERY,
                learner=learner,
                learner_params=dict(learner_params or {}),
                output_dir=output_dir,
                seed=SEED)


def offline_upper_bound(k_list=(1, 5)) -> Dict[int, float]:
    '''
    Top-k accuracies of the offline linear classifier trained on all
    benchmark training data
    '''
    train, eval_set = SyntheticBenchmark()
    schedule = OfflineTrainConfig.imagenet(epochs=UPPER_BOUND_EPOCHS,
                                           decay_epochs=(20, 25),
                                           seed=SEED)
    model = OfflineLinearClassifier(schedule).fit(train.vectors, train.labels)

    return {k: evaluate_topk(model, eval_set, k) for k in k_list}


def run_benchmark(methods=None, out_dir: Optional[str]=None,
                  verbose: bool=False,
                  pretrain_sizes=PRETRAIN_SIZES) -> pd.DataFrame:
    '''
    Run learners on the benchmark for every pre-train size and
    compare them

    Parameters
    ----------
    methods:
        names from ``METHODS`` OR ``None`` for all of them.
        The first one is the baseline of ``relative_improvement``
    out_dir:
        directory receiving one report directory per method and
        pre-train size OR ``None`` to keep results in memory only
    verbose:
        show progress bars
    pretrain_sizes:
        numbers of classes learned in the init phase

    Returns
    -------
    ``pd.DataFrame`` with one row per method and pre-train size plus
    the offline upper bound row. ``relative_improvement`` is the
    percentage gain of final top-1 over the baseline method with the
    same pre-train size
    '''
    methods = list(METHODS) if methods is None else methods
    rows = []
    for size in pretrain_sizes:
        baseline = None
        for name in methods:
            kind, params = METHODS[name]
            output_dir = None if out_dir is None else \
                         os.path.join(out_dir, '{}_{}'.format(name, size))
            cfg = benchmark_config(kind, params, output_dir, size)
            report = run_experiment(cfg, verbose=verbose)
            final = report.final(1)
            if baseline is None:
                baseline = final
            rows.append({'method': name,
                         'pretrain_size': size,
                         'final_top1': final,
                         'final_top5': report.final(5),
                         'average_top5': report.to_dict()['average_top5'],
                         'relative_improvement':
                             relative_improvement(final, baseline)
                             if baseline > 0 else np.nan})
    bound = offline_upper_bound()
    rows.append({'method': 'offline_upper_bound',
                 'pretrain_size': NUM_CLASSES,
                 'final_top1': bound[1],
                 'final_top5': bound[5],
                 'average_top5': np.nan,
                 'relative_improvement': np.nan})
    result = pd.DataFrame(rows)
    result['relative_to_offline'] = [
        relative_improvement(x, bound[1]) for x in result['final_top1']]

    return result


def size_grid(result: pd.DataFrame, column: str='final_top1') -> pd.DataFrame:
    '''
    Method x pre-train size table of one ``run_benchmark`` column
    '''
    runs = result[result['method'] != 'offline_upper_bound']
    grid = runs.pivot(index='method', columns='pretrain_size',
                      values=column)

    return grid.loc[list(dict.fromkeys(runs['method']))]


def main():
    '''
    Run every benchmark method for every pre-train size and print the
    comparison tables. Reports are written under ``out_path`` of
    `~/.ml_continual/config.json`
    '''
    parser = argparse.ArgumentParser()
    parser.add_argument('--methods', nargs='+', choices=sorted(METHODS))
    parser.add_argument('--pretrain-sizes', nargs='+', type=int,
                        default=list(PRETRAIN_SIZES))
    parser.add_argument('--verbose', action='store_true')
    args = parser.parse_args()

    config = load_config()
    out_dir = os.path.join(config['out_path'], OUT_NAME)
    result = run_benchmark(args.methods, out_dir, args.verbose,
                           args.pretrain_sizes)
    print(result.to_string(index=False))
    for column in ['final_top1', 'average_top5', 'relative_improvement']:
        print('\n{}'.format(column))
        print(size_grid(result, column).to_string())
    path = os.path.join(out_dir, 'summary.csv')
    check_create_folder(path)
    result.to_csv(path, index=False)


if __name__ == '__main__':
    main()
