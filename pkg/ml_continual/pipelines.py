import logging
import numpy as np
from tqdm import tqdm
from typing import Dict, Iterable, Sequence
from .data_loaders.fset import FeatureDataset
from .metrics import LearningCurve, checkpoint_evaluate
from .models import BaseLearner, load_learner
from .stream import StreamPlan


logger = logging.getLogger(__name__)


class ContinualPipeline:
    '''
    Class incapsulate the offline init phase of a continual learner
    during fit-phase and the online one-by-one pass over a stream plan
    with checkpoint evaluation during execute-phase.
    '''
    def __init__(self, learner: BaseLearner, eval_set: FeatureDataset,
                 k_list: Sequence[int]=(1, 5),
                 feature_source: str='synthetic', pretrain_size: int=0,
                 verbose: bool=False):
        '''
        Parameters
        ----------
        learner:
            class implementing ``fit(X, y)``, ``partial_fit(z, y)``
            and ``decision_scores(X)`` interfaces
            (see :mod:`~ml_continual.models`)
        eval_set:
            held-out examples; at every checkpoint only the examples
            of classes seen so far are used
        k_list:
            top-k accuracies recorded at checkpoints
        feature_source:
            name of the embedding source, echoed in the curve
        pretrain_size:
            number of pre-train classes, echoed in the curve
        verbose:
            show progress bar over the stream
        '''
        self.core = {'learner': learner}
        self.eval_set = eval_set
        self.k_list = tuple(int(k) for k in k_list)
        self.feature_source = feature_source
        self.pretrain_size = int(pretrain_size)
        self.verbose = verbose

    @property
    def learner(self) -> BaseLearner:
        return self.core['learner']

    def fit(self, train: FeatureDataset,
            pretrain_classes: Iterable[int]) -> Dict:
        '''
        Offline init phase on the pre-train classes of ``train``

        Parameters
        ----------
        train:
            full training dataset
        pretrain_classes:
            classes whose examples form the pre-train set

        Returns
        -------
        ``Dict`` with pre-train example count and known class count
        '''
        base = train.filter_classes(pretrain_classes)
        logger.info('Init phase of %s on %d examples', self.learner.kind,
                    len(base))
        self.learner.fit(base.vectors, base.labels)

        return {'pretrain_examples': len(base),
                'known_classes': len(self.learner.classes_)}

    def execute(self, train: FeatureDataset, plan: StreamPlan) -> LearningCurve:
        '''
        Present ``train`` examples one by one in plan order

        Parameters
        ----------
        train:
            dataset ``plan`` indexes into
        plan:
            stream order and checkpoints

        Returns
        -------
        :class:`~ml_continual.metrics.LearningCurve` holding the
        post-init point (when the learner already knows classes)
        and one point per plan checkpoint
        '''
        learner = self.learner
        curve = LearningCurve(learner.kind, self.feature_source,
                              self.pretrain_size)
        seen = set(int(c) for c in learner.classes_)
        if seen:
            curve.add(checkpoint_evaluate(learner, self.eval_set, seen,
                                          self.k_list, 0))
        marks = dict(plan.checkpoints)
        for position, idx in enumerate(tqdm(plan.order,
                                            disable=not self.verbose),
                                       start=1):
            label = int(train.labels[idx])
            learner.partial_fit(train.vectors[idx], label)
            seen.add(label)
            if position in marks:
                point = checkpoint_evaluate(learner, self.eval_set, seen,
                                            self.k_list, position)
                curve.add(point)
                logger.info('Checkpoint at %d: %d classes, %s', position,
                            point.classes_seen, point.accuracies)

        return curve

    def export_core(self, path: str):
        '''
        Save the learner snapshot

        Parameters
        ----------
        path:
            snapshot file path
        '''
        self.learner.save(path)

    def load_core(self, path: str):
        '''
        Replace the learner by the snapshot at ``path``
        '''
        self.core['learner'] = load_learner(path)
