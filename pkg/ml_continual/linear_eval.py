'''
Offline linear evaluation: multi-epoch minibatch softmax training on
frozen features. Measures feature quality and serves as the converged
upper bound for the online learners.
'''

import logging
import numpy as np
from dataclasses import dataclass, asdict
from tqdm import tqdm
from typing import List, Tuple
from .data_loaders.fset import FeatureDataset
from .heads import SoftmaxHead, softmax_loss_grad


logger = logging.getLogger(__name__)


@dataclass
class OfflineTrainConfig:
    epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 0.1
    decay_epochs: Tuple[int, ...] = (60, 80)
    decay_factor: float = 10.0
    weight_decay: float = 1e-5
    seed: int = 0

    @classmethod
    def imagenet(cls, **kwargs) -> 'OfflineTrainConfig':
        return cls(**kwargs)

    @classmethod
    def places(cls, **kwargs) -> 'OfflineTrainConfig':
        '''
        Shorter schedule: 28 epochs, decay at 10 and 18
        '''
        params = dict(epochs=28, decay_epochs=(10, 18))
        params.update(kwargs)
        return cls(**params)

    @classmethod
    def moco(cls, **kwargs) -> 'OfflineTrainConfig':
        '''
        Large step size without weight decay, for features whose
        scale needs it
        '''
        params = dict(learning_rate=30.0, weight_decay=0.0)
        params.update(kwargs)
        return cls(**params)

    def validate(self):
        if self.batch_size < 1:
            raise ValueError('batch_size must be at least 1')
        if self.epochs < 1:
            raise ValueError('epochs must be positive')
        if self.learning_rate <= 0 or self.decay_factor <= 0 \
                or self.weight_decay < 0:
            raise ValueError('rates must be positive')
        if any(d < 1 or d > self.epochs for d in self.decay_epochs):
            raise ValueError('decay_epochs must lie in [1, epochs]')

    def learning_rate_at(self, epoch: int) -> float:
        '''
        Step size of 0-based ``epoch``; divided by ``decay_factor``
        once for every decay epoch already reached
        '''
        decays = sum(1 for d in self.decay_epochs if epoch >= d)
        return self.learning_rate / self.decay_factor ** decays

    def to_dict(self):
        result = asdict(self)
        result['decay_epochs'] = list(self.decay_epochs)
        return result


class OfflineLinearClassifier:
    '''
    Softmax classifier trained by seeded minibatch SGD with
    step decay and L2 weight decay on the weights (not the bias)
    '''
    def __init__(self, config: OfflineTrainConfig=None, verbose: bool=False):
        '''
        Parameters
        ----------
        config:
            training schedule, defaults to :class:`OfflineTrainConfig`
        verbose:
            show progress bar over epochs
        '''
        self.config = OfflineTrainConfig() if config is None else config
        self.verbose = verbose
        self.head_ = None
        self.loss_history_: List[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> 'OfflineLinearClassifier':
        '''
        Parameters
        ----------
        X:
            ``(n, dim)`` features, ``n >= 1``
        y:
            class ids
        '''
        cfg = self.config
        cfg.validate()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            raise ValueError('training set is empty')

        head = SoftmaxHead(X.shape[1], cfg.learning_rate)
        for cls in np.unique(y):
            head.add_class(cls)
        rng = np.random.default_rng(cfg.seed)
        self.loss_history_ = []
        for epoch in tqdm(range(cfg.epochs), disable=not self.verbose):
            lr = cfg.learning_rate_at(epoch)
            perm = rng.permutation(len(X))
            losses = []
            for start in range(0, len(X), cfg.batch_size):
                batch = perm[start:start + cfg.batch_size]
                loss, grad_W, grad_b = softmax_loss_grad(
                    head, X[batch], y[batch], cfg.weight_decay)
                head.step(grad_W, grad_b, lr)
                losses.append(loss * len(batch))
            self.loss_history_.append(float(sum(losses) / len(X)))
        logger.info('Offline training done, final epoch loss %.4f',
                    self.loss_history_[-1])
        self.head_ = head

        return self

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return self.head_.decision_scores(X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.head_.predict(X)


def train_linear_offline(train: FeatureDataset,
                         cfg: OfflineTrainConfig=None,
                         verbose: bool=False) -> SoftmaxHead:
    '''
    Train a softmax head offline on a feature dataset

    Parameters
    ----------
    train:
        non-empty training set
    cfg:
        training schedule
    verbose:
        show progress bar

    Returns
    -------
    :class:`~ml_continual.heads.SoftmaxHead`
    '''
    model = OfflineLinearClassifier(cfg, verbose)
    model.fit(train.vectors, train.labels)

    return model.head_
