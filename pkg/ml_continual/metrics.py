import json
import numpy as np
import pandas as pd
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence
from .data_loaders.fset import FeatureDataset
from .utils import check_create_folder


def topk_hits(scores: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    '''
    Boolean mask of rows whose label is among the ``k`` highest scores.
    Equal scores rank the lower class id first.
    '''
    if k < 1:
        raise ValueError('k must be at least 1')
    labels = np.asarray(labels, dtype=np.int64)
    n_slots = max(scores.shape[1], int(labels.max()) + 1 if len(labels) else 0)
    if n_slots > scores.shape[1]:
        pad = np.full((len(scores), n_slots - scores.shape[1]), -np.inf)
        scores = np.hstack([scores, pad])
    ranking = np.argsort(-scores, axis=1, kind='stable')[:, :k]

    return (ranking == labels[:, None]).any(axis=1)


def evaluate_topk(model, eval_set: FeatureDataset, k: int,
                  classes: Optional[Iterable[int]]=None) -> float:
    '''
    Top-k accuracy of a model

    Parameters
    ----------
    model:
        class implementing ``decision_scores(X)``
    eval_set:
        evaluation examples
    k:
        number of top predictions accepted
    classes:
        restrict evaluation to examples of these classes
        OR ``None`` for the whole set

    Returns
    -------
    fraction of hits in ``[0, 1]``
    '''
    if k < 1:
        raise ValueError('k must be at least 1')
    if classes is not None:
        eval_set = eval_set.filter_classes(classes)
    if len(eval_set) == 0:
        raise ValueError('empty evaluation set')
    scores = model.decision_scores(eval_set.vectors)
    hits = topk_hits(scores, eval_set.labels, k)

    return float(hits.mean())


@dataclass
class CurvePoint:
    position: int
    classes_seen: int
    accuracies: Dict[int, float]

    def to_dict(self):
        result = {'position': self.position,
                  'classes_seen': self.classes_seen}
        for k in sorted(self.accuracies):
            result['top{}'.format(k)] = self.accuracies[k]
        return result


@dataclass
class LearningCurve:
    '''
    Accuracy at stream checkpoints. ``position`` counts stream
    examples consumed (0 for the post-init point).
    '''
    method: str
    feature_source: str = 'synthetic'
    pretrain_size: int = 0
    points: List[CurvePoint] = field(default_factory=list)

    def add(self, point: CurvePoint):
        if self.points and point.position <= self.points[-1].position:
            raise ValueError('curve positions must be strictly increasing')
        for acc in point.accuracies.values():
            if not 0.0 <= acc <= 1.0:
                raise ValueError('accuracy {} outside [0, 1]'.format(acc))
        self.points.append(point)

    def values(self, k: int) -> List[float]:
        if any(k not in p.accuracies for p in self.points):
            raise KeyError('top-{} was not recorded'.format(k))
        return [p.accuracies[k] for p in self.points]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([p.to_dict() for p in self.points])


@dataclass
class RunReport:
    config: Dict
    curve: LearningCurve
    wall_clock_seconds: float = 0.0

    def final(self, k: int) -> float:
        return self.curve.values(k)[-1]

    def to_dict(self, include_timing: bool=False) -> Dict:
        ks = sorted(self.curve.points[-1].accuracies) if self.curve.points \
             else []
        result = {
            'config': self.config,
            'method': self.curve.method,
            'feature_source': self.curve.feature_source,
            'pretrain_size': self.curve.pretrain_size,
            'curve': [p.to_dict() for p in self.curve.points],
        }
        for k in ks:
            result['final_top{}'.format(k)] = self.final(k)
            result['average_top{}'.format(k)] = \
                average_accuracy(self.curve, k)
        if include_timing:
            result['wall_clock_seconds'] = self.wall_clock_seconds
        return result


def checkpoint_evaluate(learner, eval_set: FeatureDataset,
                        seen_classes: Iterable[int],
                        k_list: Sequence[int]=(1, 5),
                        position: int=0) -> CurvePoint:
    '''
    Evaluate a learner on the eval examples of the classes seen so far

    Parameters
    ----------
    learner:
        class implementing ``decision_scores(X)``
        with at least one trained class
    eval_set:
        evaluation examples of all classes
    seen_classes:
        classes presented to the learner so far
    k_list:
        values of k to record
    position:
        stream position stored in the point
    '''
    seen = np.unique(np.fromiter(seen_classes, dtype=np.int64))
    subset = eval_set.filter_classes(seen)
    if len(subset) == 0:
        raise ValueError('no evaluation examples for the seen classes')
    scores = learner.decision_scores(subset.vectors)
    accuracies = {int(k): float(topk_hits(scores, subset.labels, k).mean())
                  for k in k_list}

    return CurvePoint(int(position), len(seen), accuracies)


def average_accuracy(curve: LearningCurve, k: int) -> float:
    '''
    Unweighted mean of top-k accuracy over all curve points,
    the post-init point included
    '''
    values = curve.values(k)
    if not values:
        raise ValueError('empty curve')
    return float(np.mean(values))


def relative_improvement(candidate: float, baseline: float) -> float:
    '''
    Percentage increase of ``candidate`` over ``baseline``
    '''
    if baseline <= 0:
        raise ValueError('baseline must be positive')
    return (candidate - baseline) / baseline * 100


def absolute_improvement(candidate: float, baseline: float) -> float:
    '''
    Difference in accuracy points (inputs given as fractions or percents
    are returned in the same unit)
    '''
    return candidate - baseline


def emit_report(report: RunReport, path: str, format: str='json'):
    '''
    Write a run report

    Parameters
    ----------
    report:
        run result
    path:
        destination file
    format:
        ``'json'`` (stable key order) or ``'csv'``
        (learning curve with one ``topK`` column per recorded k,
        ``position,top1,top5`` for the default ``k_list``)
    '''
    check_create_folder(path)
    if format == 'json':
        with open(path, 'w') as f:
            json.dump(report.to_dict(), f, sort_keys=True, indent=2)
            f.write('\n')
    elif format == 'csv':
        ks = sorted(report.curve.points[0].accuracies) \
             if report.curve.points else [1, 5]
        columns = ['position'] + ['top{}'.format(k) for k in ks]
        df = report.curve.to_frame()
        if df.empty:
            df = pd.DataFrame(columns=columns)
        df[columns].to_csv(path, index=False)
    else:
        raise ValueError("format must be 'json' or 'csv'")
