import argparse
import json
import logging
import os
import sys
import pandas as pd
from typing import List, Optional
from .data_loaders.fset import load_dataset, save_dataset
from .data_loaders.synthetic import SyntheticSpec, gen_synthetic_gaussian, \
                                    TRAIN_STREAM, EVAL_STREAM
from .errors import ExperimentError
from .experiment import ExperimentConfig, run_experiment
from .linear_eval import OfflineTrainConfig, OfflineLinearClassifier
from .metrics import evaluate_topk, relative_improvement, absolute_improvement
from .stream import SplitSpec, select_pretrain_classes
from .utils import load_config, load_json, save_json


logger = logging.getLogger(__name__)

_SCHEDULES = {'imagenet': OfflineTrainConfig.imagenet,
              'places': OfflineTrainConfig.places,
              'moco': OfflineTrainConfig.moco}


def _default_path(key: str, name: str) -> str:
    try:
        base = load_config()[key]
    except (IOError, OSError, KeyError, ValueError):
        base = '.'
    return os.path.join(base, name)


def _gen(args):
    spec = SyntheticSpec(args.num_classes, args.dim, args.examples_per_class,
                         args.class_separation, args.noise_scale, args.seed)
    stream = EVAL_STREAM if args.split == 'eval' else TRAIN_STREAM
    ds = gen_synthetic_gaussian(spec, stream)
    out = args.out or _default_path(
            'data_path', 'synthetic_{}_{}.fset'.format(args.seed, args.split))
    save_dataset(ds, out)
    print(json.dumps({'path': out, 'examples': len(ds), 'dim': ds.dim,
                      'num_classes': ds.num_classes}, sort_keys=True))


def _run(args):
    cfg = ExperimentConfig.from_file(args.config, args.set)
    if cfg.output_dir is None:
        cfg.output_dir = _default_path(
            'out_path', '{}_{}'.format(cfg.learner, cfg.seed))
    report = run_experiment(cfg, init_snapshot=args.init_snapshot,
                            resume_from=args.resume_from,
                            verbose=args.verbose)
    summary = report.to_dict()
    print(json.dumps({key: summary[key] for key in sorted(summary)
                      if key.startswith(('final_', 'average_'))},
                     sort_keys=True))


def _fit_offline(train, cfg, verbose):
    return OfflineLinearClassifier(cfg, verbose).fit(train.vectors,
                                                     train.labels)


def _eval_offline(args):
    train = load_dataset(args.train)
    eval_set = load_dataset(args.eval)
    overrides = {name: getattr(args, name) for name in
                 ['epochs', 'batch_size', 'learning_rate', 'weight_decay',
                  'seed'] if getattr(args, name) is not None}
    if args.decay_epochs is not None:
        overrides['decay_epochs'] = tuple(args.decay_epochs)
    cfg = _SCHEDULES[args.schedule](**overrides)

    model = _fit_offline(train, cfg, args.verbose)
    record = {'schedule': args.schedule, 'config': cfg.to_dict(),
              'full': {'top{}'.format(k): evaluate_topk(model, eval_set, k)
                       for k in args.k}}
    if args.pretrain_num_classes is not None:
        split = SplitSpec(args.pretrain_num_classes, args.split_seed)
        pretrain, _ = select_pretrain_classes(train.num_classes, split,
                                              allow_all=True)
        restricted = _fit_offline(train.filter_classes(pretrain), cfg,
                                  args.verbose)
        record['pretrain_classes'] = [int(c) for c in pretrain]
        record['pretrain'] = {
            'top{}'.format(k): evaluate_topk(restricted, eval_set, k,
                                             classes=pretrain)
            for k in args.k}
    if args.out is not None:
        model.head_.save(args.out)
    print(json.dumps(record, sort_keys=True))


def _report(args):
    reports = [load_json(path) for path in args.inputs]
    key = 'final_top{}'.format(args.k)
    baseline = reports[args.baseline][key]
    rows = []
    for path, rep in zip(args.inputs, reports):
        rows.append({'run': path,
                     'method': rep['method'],
                     key: rep[key],
                     'relative_improvement': relative_improvement(rep[key],
                                                                  baseline),
                     'absolute_improvement': 100 * absolute_improvement(
                                                    rep[key], baseline)})
    table = pd.DataFrame(rows)
    if args.out is not None:
        save_json(args.out, rows)
    print(table.to_string(index=False))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ml_continual')
    parser.add_argument('--verbose', action='store_true')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    gen = sub.add_parser('gen', help='write a synthetic FSET dataset')
    gen.add_argument('--num-classes', type=int, default=20)
    gen.add_argument('--dim', type=int, default=32)
    gen.add_argument('--examples-per-class', type=int, default=100)
    gen.add_argument('--class-separation', type=float, default=4.0)
    gen.add_argument('--noise-scale', type=float, default=1.0)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--split', choices=['train', 'eval'], default='train')
    gen.add_argument('--out')
    gen.set_defaults(func=_gen)

    run = sub.add_parser('run', help='run a continual learning experiment')
    run.add_argument('--config', required=True)
    run.add_argument('--set', action='append', default=[],
                     metavar='KEY=VALUE')
    run.add_argument('--init-snapshot')
    run.add_argument('--resume-from')
    run.set_defaults(func=_run)

    offline = sub.add_parser('eval-offline',
                             help='offline linear evaluation')
    offline.add_argument('--train', required=True)
    offline.add_argument('--eval', required=True)
    offline.add_argument('--k', type=int, nargs='+', default=[1, 5])
    offline.add_argument('--schedule', choices=sorted(_SCHEDULES),
                         default='imagenet')
    offline.add_argument('--epochs', type=int)
    offline.add_argument('--decay-epochs', type=int, nargs='*')
    offline.add_argument('--batch-size', type=int)
    offline.add_argument('--learning-rate', type=float)
    offline.add_argument('--weight-decay', type=float)
    offline.add_argument('--seed', type=int)
    offline.add_argument('--pretrain-num-classes', type=int)
    offline.add_argument('--split-seed', type=int, default=0)
    offline.add_argument('--out', help='softmax head snapshot path')
    offline.set_defaults(func=_eval_offline)

    report = sub.add_parser('report', help='compare run reports')
    report.add_argument('--inputs', nargs='+', required=True)
    report.add_argument('--baseline', type=int, default=0,
                        help='index of the baseline among inputs')
    report.add_argument('--k', type=int, default=1)
    report.add_argument('--out')
    report.set_defaults(func=_report)

    return parser


def main(argv: Optional[List[str]]=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose
                        else logging.WARNING)
    try:
        args.func(args)
    except Exception as exc:
        phase = None
        if isinstance(exc, ExperimentError):
            phase, exc = exc.phase, exc.cause
        line = json.dumps({'error': type(exc).__name__,
                           'message': str(exc), 'phase': phase})
        print(line, file=sys.stderr)
        return 1

    return 0


if __name__ == '__main__':
    sys.exit(main())
