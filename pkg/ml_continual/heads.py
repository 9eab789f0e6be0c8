'''
Trainable classifier heads over embedding vectors: a linear softmax head
and a one-hidden-layer rectifier head, with exact analytic gradients of
the (soft-label) cross-entropy. Rows of output layers grow as classes
appear; a new class row starts at zero.
'''

import numpy as np
from typing import Dict, Iterable, Optional, Tuple
from .errors import NotFittedError
from .snapshots import save_snapshot


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def soft_cross_entropy(logits: np.ndarray,
                       targets: np.ndarray) -> Tuple[float, np.ndarray]:
    '''
    Mean cross-entropy against soft targets and its gradient w.r.t. logits
    '''
    n = len(logits)
    log_p = log_softmax(logits)
    loss = -(targets * log_p).sum() / n
    dlogits = (np.exp(log_p) - targets) / n

    return float(loss), dlogits


def scores_by_class(logits: np.ndarray, classes: np.ndarray) -> np.ndarray:
    '''
    Scatter per-row logits into columns indexed by class id,
    ``-inf`` for unknown class ids
    '''
    n_slots = int(classes.max()) + 1 if len(classes) else 0
    scores = np.full((len(logits), n_slots), -np.inf)
    scores[:, classes] = logits

    return scores


class _GrowingClasses:
    def __init__(self):
        self.classes_ = np.zeros(0, dtype=np.int64)
        self._rows = {}

    @property
    def num_classes(self) -> int:
        return len(self.classes_)

    def knows(self, label: int) -> bool:
        return int(label) in self._rows

    def rows_of(self, labels) -> np.ndarray:
        return np.array([self._rows[int(y)] for y in labels], dtype=np.int64)

    def one_hot(self, labels) -> np.ndarray:
        targets = np.zeros((len(labels), self.num_classes))
        targets[np.arange(len(labels)), self.rows_of(labels)] = 1.0
        return targets

    def _register(self, label: int) -> bool:
        label = int(label)
        if label < 0:
            raise ValueError('class ids must be non-negative')
        if label in self._rows:
            return False
        self._rows[label] = len(self.classes_)
        self.classes_ = np.append(self.classes_, label)
        return True

    def _check_fitted(self):
        if not self.num_classes:
            raise NotFittedError('no known classes')

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        '''
        Score matrix ``(n, max_class_id + 1)``; column ``k`` is class ``k``
        '''
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return scores_by_class(self.logits(X), self.classes_)

    def predict(self, X: np.ndarray) -> np.ndarray:
        '''
        Highest scoring class id per row, lowest id on ties
        '''
        return np.argmax(self.decision_scores(X), axis=1)


class SoftmaxHead(_GrowingClasses):
    '''
    Linear softmax classifier ``softmax(W z + b)`` over known classes
    '''
    def __init__(self, dim: int, learning_rate: float=0.1):
        '''
        Parameters
        ----------
        dim:
            embedding dimensionality
        learning_rate:
            step size of :meth:`step`
        '''
        super().__init__()
        if dim < 1:
            raise ValueError('dim must be positive')
        self.dim = int(dim)
        self.learning_rate = float(learning_rate)
        self.W = np.zeros((0, self.dim))
        self.b = np.zeros(0)

    def add_class(self, label: int):
        if self._register(label):
            self.W = np.vstack([self.W, np.zeros((1, self.dim))])
            self.b = np.append(self.b, 0.0)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W.T + self.b

    def step(self, grad_W: np.ndarray, grad_b: np.ndarray,
             learning_rate: Optional[float]=None):
        lr = self.learning_rate if learning_rate is None else learning_rate
        self.W -= lr * grad_W
        self.b -= lr * grad_b

    def to_snapshot(self):
        meta = {'dim': self.dim, 'learning_rate': self.learning_rate}
        arrays = {'classes': self.classes_, 'W': self.W, 'b': self.b}
        return meta, arrays

    @classmethod
    def from_snapshot(cls, meta: Dict, arrays: Dict) -> 'SoftmaxHead':
        head = cls(meta['dim'], meta['learning_rate'])
        for label in arrays['classes']:
            head._register(label)
        head.W = arrays['W'].astype(np.float64)
        head.b = arrays['b'].astype(np.float64)
        return head

    def save(self, path: str):
        meta, arrays = self.to_snapshot()
        save_snapshot(path, 'softmax_head', meta, arrays)


def softmax_loss_grad(head: SoftmaxHead, X: np.ndarray, y: Iterable[int],
                      weight_decay: float=0.0):
    '''
    Mean cross-entropy of a batch and its exact gradients

    Parameters
    ----------
    head:
        softmax head knowing every label of ``y``
    X:
        ``(n, dim)`` batch
    y:
        class ids of the batch
    weight_decay:
        adds ``weight_decay / 2 * ||W||^2`` to the loss (bias excluded)

    Returns
    -------
    ``(loss, grad_W, grad_b)``
    '''
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    targets = head.one_hot(list(y))
    loss, dlogits = soft_cross_entropy(head.logits(X), targets)
    grad_W = dlogits.T @ X
    grad_b = dlogits.sum(axis=0)
    if weight_decay:
        loss += 0.5 * weight_decay * float((head.W ** 2).sum())
        grad_W = grad_W + weight_decay * head.W

    return loss, grad_W, grad_b


class PlasticHead(_GrowingClasses):
    '''
    Trainable nonlinear head ``softmax(W2 relu(W1 z + b1) + b2)`` applied
    downstream of the quantizer
    '''
    def __init__(self, dim: int, hidden_size: int=256,
                 rng: Optional[np.random.Generator]=None,
                 init_scale: Optional[float]=None):
        '''
        Parameters
        ----------
        dim:
            input dimensionality
        hidden_size:
            width of the rectifier layer
        rng:
            generator for the hidden weights
        init_scale:
            standard deviation of hidden weights,
            ``sqrt(2 / dim)`` by default
        '''
        super().__init__()
        if dim < 1 or hidden_size < 1:
            raise ValueError('dim and hidden_size must be positive')
        rng = np.random.default_rng(0) if rng is None else rng
        scale = np.sqrt(2.0 / dim) if init_scale is None else init_scale
        self.dim = int(dim)
        self.hidden_size = int(hidden_size)
        self.W1 = scale * rng.standard_normal((self.hidden_size, self.dim))
        self.b1 = np.zeros(self.hidden_size)
        self.W2 = np.zeros((0, self.hidden_size))
        self.b2 = np.zeros(0)

    @property
    def params(self) -> Dict[str, np.ndarray]:
        return {'W1': self.W1, 'b1': self.b1, 'W2': self.W2, 'b2': self.b2}

    def add_class(self, label: int):
        if self._register(label):
            self.W2 = np.vstack([self.W2, np.zeros((1, self.hidden_size))])
            self.b2 = np.append(self.b2, 0.0)

    def forward(self, X: np.ndarray):
        pre = X @ self.W1.T + self.b1
        hidden = np.maximum(pre, 0.0)
        return pre, hidden, hidden @ self.W2.T + self.b2

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[2]

    def step(self, grads: Dict[str, np.ndarray], learning_rate: float):
        for name, param in self.params.items():
            param -= learning_rate * grads[name]

    def to_snapshot(self):
        meta = {'dim': self.dim, 'hidden_size': self.hidden_size}
        arrays = dict(self.params, classes=self.classes_)
        return meta, arrays

    @classmethod
    def from_snapshot(cls, meta: Dict, arrays: Dict) -> 'PlasticHead':
        head = cls(meta['dim'], meta['hidden_size'])
        for label in arrays['classes']:
            head._register(label)
        for name in ['W1', 'b1', 'W2', 'b2']:
            setattr(head, name, arrays[name].astype(np.float64))
        return head


def head_loss_grad(head: PlasticHead, X: np.ndarray, targets: np.ndarray):
    '''
    Mean soft-label cross-entropy of the plastic head and exact gradients
    of every parameter

    Parameters
    ----------
    head:
        plastic head
    X:
        ``(n, dim)`` batch
    targets:
        ``(n, head.num_classes)`` label distributions,
        columns ordered as ``head.classes_``

    Returns
    -------
    ``(loss, grads)`` with ``grads`` keyed like ``head.params``
    '''
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    pre, hidden, logits = head.forward(X)
    loss, dlogits = soft_cross_entropy(logits, targets)
    dhidden = dlogits @ head.W2
    dhidden[pre <= 0] = 0.0
    grads = {
        'W2': dlogits.T @ hidden,
        'b2': dlogits.sum(axis=0),
        'W1': dhidden.T @ X,
        'b1': dhidden.sum(axis=0),
    }

    return loss, grads


def mixup_batch(X: np.ndarray, targets: np.ndarray, alpha: float,
                rng: np.random.Generator, lam: Optional[float]=None):
    '''
    Manifold mixup of a batch. Items are paired at random without
    replacement; each pair ``(a, b)`` with ``lam ~ Beta(alpha, alpha)``
    yields ``lam*a + (1-lam)*b`` and ``lam*b + (1-lam)*a`` together with
    the matching label mixes. An odd leftover passes through unmixed.

    Parameters
    ----------
    X:
        ``(n, dim)`` vectors, ``n >= 2``
    targets:
        ``(n, K)`` label distributions
    alpha:
        Beta concentration, positive
    rng:
        random generator
    lam:
        fixed mixing coefficient for every pair instead of a Beta draw

    Returns
    -------
    ``(mixed_X, mixed_targets)`` of the input shapes
    '''
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(X) < 2:
        raise ValueError('mixup needs at least 2 items')
    if lam is None and alpha <= 0:
        raise ValueError('alpha must be positive')

    perm = rng.permutation(len(X))
    n_pairs = len(X) // 2
    first, second = perm[:n_pairs], perm[n_pairs:2 * n_pairs]
    if lam is None:
        lams = rng.beta(alpha, alpha, size=n_pairs)
    else:
        lams = np.full(n_pairs, float(lam))
    lams = lams[:, None]

    out_X = [lams * X[first] + (1 - lams) * X[second],
             lams * X[second] + (1 - lams) * X[first],
             X[perm[2 * n_pairs:]]]
    out_Y = [lams * targets[first] + (1 - lams) * targets[second],
             lams * targets[second] + (1 - lams) * targets[first],
             targets[perm[2 * n_pairs:]]]

    return np.concatenate(out_X), np.concatenate(out_Y)
