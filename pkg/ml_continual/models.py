'''
Online learners over frozen embeddings. Every learner implements
``fit(X, y)`` for the offline init phase, ``partial_fit(z, y)`` for one
online example, ``decision_scores(X)`` and ``predict(X)``.
'''

import logging
import numpy as np
from tqdm import tqdm
from typing import Dict, Optional
from .buffers import ReplayBuffer
from .errors import BufferCapacityError, NotFittedError, \
                    SingularCovarianceError
from .heads import SoftmaxHead, PlasticHead, softmax_loss_grad, \
                   head_loss_grad, mixup_batch
from .quantization import ProductQuantizer
from .snapshots import save_snapshot, load_snapshot
from .utils import rng_state, rng_from_state


logger = logging.getLogger(__name__)


def _check_vector(z, dim: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if len(z) != dim:
        raise ValueError('expected vector of dim {}, got {}'.format(
                            dim, len(z)))
    if not np.isfinite(z).all():
        raise ValueError('vector contains non-finite values')
    return z


def _check_label(y) -> int:
    y = int(y)
    if y < 0:
        raise ValueError('class ids must be non-negative')
    return y


class BaseLearner:
    kind = None

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X: np.ndarray) -> np.ndarray:
        '''
        Highest scoring class id per row, lowest id on ties
        '''
        return np.argmax(self.decision_scores(X), axis=1)

    def predict_one(self, z: np.ndarray):
        '''
        Returns
        -------
        ``(label, scores)`` for a single vector
        '''
        scores = self.decision_scores(np.atleast_2d(z))[0]
        return int(np.argmax(scores)), scores

    def save(self, path: str):
        meta, arrays = self.to_snapshot()
        save_snapshot(path, self.kind, meta, arrays)


class StreamingLDA(BaseLearner):
    '''
    Streaming linear discriminant analysis: running class means and a
    shared covariance over fixed embeddings, classifying by the nearest
    class Gaussian under the shrunk shared covariance.
    '''
    kind = 'slda'

    def __init__(self, dim: int, shrinkage: float=1e-4,
                 covariance_plastic: bool=True, init: str='identity'):
        '''
        Parameters
        ----------
        dim:
            embedding dimensionality
        shrinkage:
            ``eps`` of ``(1 - eps) * cov + eps * I``
        covariance_plastic:
            keep updating the covariance during the online phase
        init:
            initial covariance, ``'identity'`` or ``'zeros'``
        '''
        if dim < 1:
            raise ValueError('dim must be positive')
        if shrinkage < 0:
            raise ValueError('shrinkage must be non-negative')
        if init not in ('identity', 'zeros'):
            raise ValueError("init must be 'identity' or 'zeros'")
        self.dim = int(dim)
        self.shrinkage = float(shrinkage)
        self.covariance_plastic = bool(covariance_plastic)
        self.init = init
        self.means_ = np.zeros((0, self.dim))
        self.counts_ = np.zeros(0, dtype=np.int64)
        self.total_count = 0
        self.covariance_ = np.eye(self.dim) if init == 'identity' \
                           else np.zeros((self.dim, self.dim))
        self._cache = None

    @property
    def classes_(self) -> np.ndarray:
        return np.flatnonzero(self.counts_ > 0)

    def _grow(self, num_slots: int):
        extra = num_slots - len(self.counts_)
        if extra > 0:
            self.means_ = np.vstack([self.means_, np.zeros((extra, self.dim))])
            self.counts_ = np.append(self.counts_,
                                     np.zeros(extra, dtype=np.int64))

    def fit(self, X: np.ndarray, y: np.ndarray) -> 'StreamingLDA':
        '''
        Set means, counts and pooled (divide-by-t) within-class
        covariance to exact batch statistics of the base data

        Parameters
        ----------
        X:
            ``(n, dim)`` base vectors
        y:
            class ids
        '''
        if self.total_count:
            raise ValueError('fit expects a fresh state')
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            return self
        if not np.isfinite(X).all():
            raise ValueError('vectors contain non-finite values')
        self._grow(int(y.max()) + 1)
        counts = np.bincount(y, minlength=len(self.counts_))
        sums = np.zeros_like(self.means_)
        np.add.at(sums, y, X)
        seen = counts > 0
        self.means_[seen] = sums[seen] / counts[seen, None]
        self.counts_ = counts.astype(np.int64)
        self.total_count = len(X)
        centered = X - self.means_[y]
        self.covariance_ = centered.T @ centered / self.total_count
        self._cache = None

        return self

    def partial_fit(self, z: np.ndarray, y: int):
        '''
        Streaming update with one example. The covariance receives the
        class-count weighted scatter of ``z`` around the pre-update class
        mean, which keeps it equal to the batch pooled covariance.

        Parameters
        ----------
        z:
            vector of ``dim`` values
        y:
            class id; unseen ids get a fresh zero slot
        '''
        z = _check_vector(z, self.dim)
        y = _check_label(y)
        self._grow(y + 1)
        count = self.counts_[y]
        mean = self.means_[y]
        if self.covariance_plastic and self.total_count > 0:
            diff = z - mean
            delta = (count / (count + 1.0)) * np.outer(diff, diff)
            self.covariance_ = (self.total_count * self.covariance_ + delta) \
                               / (self.total_count + 1.0)
        self.means_[y] = (count * mean + z) / (count + 1.0)
        self.counts_[y] = count + 1
        self.total_count += 1
        self._cache = None

    def precision(self) -> np.ndarray:
        '''
        ``[(1 - eps) * cov + eps * I]^-1`` via a symmetric eigensolve,
        cached until the next update
        '''
        if self.total_count < 1:
            raise NotFittedError('no examples learned')
        if self._cache is not None:
            return self._cache['precision']

        shrunk = (1 - self.shrinkage) * self.covariance_ \
                 + self.shrinkage * np.eye(self.dim)
        shrunk = 0.5 * (shrunk + shrunk.T)
        eigvals, eigvecs = np.linalg.eigh(shrunk)
        smallest, largest = eigvals.min(), eigvals.max()
        condition = largest / smallest if smallest > 0 else np.inf
        if not condition < 1.0 / np.finfo(np.float64).eps:
            raise SingularCovarianceError(condition)
        precision = (eigvecs / eigvals) @ eigvecs.T
        precision = 0.5 * (precision + precision.T)

        classes = self.classes_
        weights = self.means_[classes] @ precision
        biases = -0.5 * (weights * self.means_[classes]).sum(axis=1)
        self._cache = {'precision': precision, 'classes': classes,
                       'weights': weights, 'biases': biases}

        return precision

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        '''
        ``mu_k^T P z - 0.5 mu_k^T P mu_k`` for trained classes,
        ``-inf`` elsewhere
        '''
        if not len(self.classes_):
            raise NotFittedError('no trained classes')
        self.precision()
        cache = self._cache
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        scores = np.full((len(X), len(self.counts_)), -np.inf)
        scores[:, cache['classes']] = X @ cache['weights'].T + cache['biases']

        return scores

    def to_snapshot(self):
        meta = {'dim': self.dim, 'shrinkage': self.shrinkage,
                'covariance_plastic': self.covariance_plastic,
                'init': self.init, 'total_count': self.total_count}
        arrays = {'means': self.means_, 'counts': self.counts_,
                  'covariance': self.covariance_}
        return meta, arrays

    @classmethod
    def from_snapshot(cls, meta: Dict, arrays: Dict) -> 'StreamingLDA':
        slda = cls(meta['dim'], meta['shrinkage'],
                   meta['covariance_plastic'], meta['init'])
        slda.means_ = arrays['means'].astype(np.float64)
        slda.counts_ = arrays['counts'].astype(np.int64)
        slda.covariance_ = arrays['covariance'].astype(np.float64)
        slda.total_count = int(meta['total_count'])
        return slda


class OnlineSoftmaxReplay(BaseLearner):
    '''
    Linear softmax over frozen embeddings trained one example at a time.
    Each step mixes up to ``replay_size`` stored embeddings into the
    batch; the buffer keeps raw float32 vectors.
    '''
    kind = 'replay_softmax'

    def __init__(self, dim: int, learning_rate: float=0.1,
                 capacity: int=735000, replay_size: int=50, seed: int=0):
        '''
        Parameters
        ----------
        dim:
            embedding dimensionality
        learning_rate:
            gradient descent step size
        capacity:
            replay buffer capacity in items; 0 disables replay
        replay_size:
            number of replayed items per step
        seed:
            seed of the learner's random generator
        '''
        self.dim = int(dim)
        self.replay_size = int(replay_size)
        self.seed = int(seed)
        self.head = SoftmaxHead(dim, learning_rate)
        self.buffer = ReplayBuffer(capacity)
        self.rng = np.random.default_rng(seed)
        self.last_batch_size_ = 0

    @property
    def learning_rate(self) -> float:
        return self.head.learning_rate

    @property
    def classes_(self) -> np.ndarray:
        return np.sort(self.head.classes_)

    def fit(self, X: np.ndarray, y: np.ndarray) -> 'OnlineSoftmaxReplay':
        '''
        No offline init phase: the head learns every class online
        '''
        return self

    def partial_fit(self, z: np.ndarray, y: int) -> float:
        '''
        One gradient step on the new example plus replayed items,
        then store the new example

        Returns
        -------
        batch loss before the step
        '''
        z = _check_vector(z, self.dim)
        y = _check_label(y)
        self.head.add_class(y)
        batch_X, batch_y = z[None, :], np.array([y])
        if self.replay_size and len(self.buffer):
            replay_X, replay_y = self.buffer.sample(self.replay_size,
                                                    self.rng)
            batch_X = np.vstack([batch_X, replay_X.astype(np.float64)])
            batch_y = np.concatenate([batch_y, replay_y])
        loss, grad_W, grad_b = softmax_loss_grad(self.head, batch_X, batch_y)
        self.head.step(grad_W, grad_b)
        self.last_batch_size_ = len(batch_y)
        if self.buffer.capacity:
            self.buffer.insert(z.astype(np.float32), y, self.rng)

        return loss

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return self.head.decision_scores(X)

    def to_snapshot(self):
        head_meta, head_arrays = self.head.to_snapshot()
        meta = {'dim': self.dim, 'replay_size': self.replay_size,
                'seed': self.seed, 'head': head_meta,
                'rng': rng_state(self.rng)}
        arrays = {'head.' + k: v for k, v in head_arrays.items()}
        arrays['buffer'] = np.frombuffer(self.buffer.to_bytes(), np.uint8)
        return meta, arrays

    @classmethod
    def from_snapshot(cls, meta: Dict, arrays: Dict) -> 'OnlineSoftmaxReplay':
        buffer = ReplayBuffer.from_bytes(arrays['buffer'].tobytes())
        learner = cls(meta['dim'], meta['head']['learning_rate'],
                      buffer.capacity, meta['replay_size'], meta['seed'])
        learner.head = SoftmaxHead.from_snapshot(
                            meta['head'], _strip_prefix(arrays, 'head.'))
        learner.buffer = buffer
        learner.rng = rng_from_state(meta['rng'])
        return learner


class RemindLite(BaseLearner):
    '''
    REMIND-style learner: a product-quantized replay buffer of
    pre-train and streamed examples and a plastic rectifier head
    trained over reconstructed vectors, with manifold mixup on replay.
    The plastic head stands in for the upper convolutional layers;
    predictions use the raw (uncompressed) vector.
    '''
    kind = 'remind'

    def __init__(self, dim: int, num_subspaces: int=32,
                 codebook_size: int=256, capacity: int=959665,
                 replay_size: int=50, mixup_alpha: float=0.1,
                 learning_rate: float=0.1, hidden_size: int=256,
                 warm_epochs: int=10, warm_batch_size: int=256,
                 lr_decay_every: int=0, lr_decay_factor: float=10.0,
                 pq_max_iters: int=25, seed: int=0, n_jobs: int=1,
                 verbose: bool=False):
        '''
        Parameters
        ----------
        dim:
            embedding dimensionality, divisible by ``num_subspaces``
        num_subspaces:
            PQ codebooks ``m``
        codebook_size:
            centroids per codebook ``s``
        capacity:
            replay buffer capacity in codes
        replay_size:
            replayed codes per online step
        mixup_alpha:
            Beta concentration of mixup, 0 disables it
        learning_rate:
            online step size
        hidden_size:
            width of the plastic head's hidden layer
        warm_epochs:
            offline epochs on reconstructed pre-train vectors after init
        warm_batch_size:
            minibatch size of warm training
        lr_decay_every:
            divide the online step size by ``lr_decay_factor`` every
            ``lr_decay_every`` updates; 0 keeps it constant
        lr_decay_factor:
            decay divisor
        pq_max_iters:
            k-means iteration limit
        seed:
            seed of the learner's random generator
        n_jobs:
            processes for codebook training
        verbose:
            show progress bars
        '''
        if mixup_alpha < 0:
            raise ValueError('mixup_alpha must be non-negative')
        self.dim = int(dim)
        self.num_subspaces = int(num_subspaces)
        self.codebook_size = int(codebook_size)
        self.replay_size = int(replay_size)
        self.mixup_alpha = float(mixup_alpha)
        self.learning_rate = float(learning_rate)
        self.hidden_size = int(hidden_size)
        self.warm_epochs = int(warm_epochs)
        self.warm_batch_size = int(warm_batch_size)
        self.lr_decay_every = int(lr_decay_every)
        self.lr_decay_factor = float(lr_decay_factor)
        self.pq_max_iters = int(pq_max_iters)
        self.seed = int(seed)
        self.n_jobs = int(n_jobs)
        self.verbose = verbose
        self.rng = np.random.default_rng(seed)
        self.pq = ProductQuantizer(num_subspaces, codebook_size,
                                   pq_max_iters, seed=self.seed,
                                   n_jobs=n_jobs, verbose=verbose)
        self.buffer = ReplayBuffer(capacity)
        self.head = PlasticHead(dim, hidden_size, rng=self.rng)
        self.num_updates = 0
        self.last_batch_size_ = 0

    @property
    def classes_(self) -> np.ndarray:
        return np.sort(self.head.classes_)

    def current_learning_rate(self) -> float:
        if self.lr_decay_every <= 0:
            return self.learning_rate
        decays = self.num_updates // self.lr_decay_every
        return self.learning_rate / self.lr_decay_factor ** decays

    def _interleaved_order(self, y: np.ndarray) -> np.ndarray:
        per_class = [self.rng.permutation(np.flatnonzero(y == cls))
                     for cls in np.unique(y)]
        longest = max(len(idxs) for idxs in per_class)
        order = [idxs[k] for k in range(longest) for idxs in per_class
                 if k < len(idxs)]
        return np.array(order, dtype=np.int64)

    def fit(self, X: np.ndarray, y: np.ndarray) -> 'RemindLite':
        '''
        Init phase: train the product quantizer on the pre-train vectors,
        store all their codes (class-interleaved, eviction applies when
        they exceed capacity), then warm-train the head on the
        reconstructions

        Parameters
        ----------
        X:
            ``(n, dim)`` pre-train vectors, ``n >= 1``
        y:
            class ids
        '''
        if self.buffer.capacity == 0:
            raise BufferCapacityError('REMIND needs a non-empty buffer')
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            raise ValueError('pre-train set is empty')

        self.pq.fit(X)
        codes = self.pq.encode(X)
        for idx in self._interleaved_order(y):
            self.buffer.insert(codes[idx], y[idx], self.rng)
        for cls in np.unique(y):
            self.head.add_class(cls)
        logger.info('Stored %d of %d pre-train codes (%d bytes each)',
                    len(self.buffer), len(X), self.pq.code_nbytes)

        recon = self.pq.decode(codes).astype(np.float64)
        targets = self.head.one_hot(y)
        for _ in tqdm(range(self.warm_epochs), disable=not self.verbose):
            perm = self.rng.permutation(len(X))
            for start in range(0, len(X), self.warm_batch_size):
                batch = perm[start:start + self.warm_batch_size]
                _, grads = head_loss_grad(self.head, recon[batch],
                                          targets[batch])
                self.head.step(grads, self.learning_rate)

        return self

    def partial_fit(self, z: np.ndarray, y: int) -> float:
        '''
        One step on the new example plus up to ``replay_size`` decoded
        replay codes (mixup on the replayed part only), then store the
        code of the new example

        Returns
        -------
        batch loss before the step
        '''
        if not self.pq.trained:
            raise NotFittedError('REMIND requires the init phase')
        z = _check_vector(z, self.dim)
        y = _check_label(y)
        self.head.add_class(y)
        batch_X = z[None, :]
        batch_Y = self.head.one_hot([y])
        if self.replay_size and len(self.buffer):
            codes, labels = self.buffer.sample(self.replay_size, self.rng)
            replay_X = self.pq.decode(codes).astype(np.float64)
            replay_Y = self.head.one_hot(labels)
            if self.mixup_alpha > 0 and len(labels) >= 2:
                replay_X, replay_Y = mixup_batch(replay_X, replay_Y,
                                                 self.mixup_alpha, self.rng)
            batch_X = np.vstack([batch_X, replay_X])
            batch_Y = np.vstack([batch_Y, replay_Y])
        loss, grads = head_loss_grad(self.head, batch_X, batch_Y)
        self.head.step(grads, self.current_learning_rate())
        self.num_updates += 1
        self.last_batch_size_ = len(batch_X)
        self.buffer.insert(self.pq.encode(z)[0], y, self.rng)

        return loss

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return self.head.decision_scores(X)

    def to_snapshot(self):
        pq_meta, pq_arrays = self.pq.to_snapshot()
        head_meta, head_arrays = self.head.to_snapshot()
        meta = {'params': {
                    'dim': self.dim,
                    'num_subspaces': self.num_subspaces,
                    'codebook_size': self.codebook_size,
                    'replay_size': self.replay_size,
                    'mixup_alpha': self.mixup_alpha,
                    'learning_rate': self.learning_rate,
                    'hidden_size': self.hidden_size,
                    'warm_epochs': self.warm_epochs,
                    'warm_batch_size': self.warm_batch_size,
                    'lr_decay_every': self.lr_decay_every,
                    'lr_decay_factor': self.lr_decay_factor,
                    'pq_max_iters': self.pq_max_iters,
                    'seed': self.seed},
                'num_updates': self.num_updates,
                'pq': pq_meta, 'head': head_meta,
                'rng': rng_state(self.rng)}
        arrays = {'pq.' + k: v for k, v in pq_arrays.items()}
        arrays.update({'head.' + k: v for k, v in head_arrays.items()})
        arrays['buffer'] = np.frombuffer(self.buffer.to_bytes(), np.uint8)
        return meta, arrays

    @classmethod
    def from_snapshot(cls, meta: Dict, arrays: Dict) -> 'RemindLite':
        learner = cls(**meta['params'])
        learner.pq = ProductQuantizer.from_snapshot(
                        meta['pq'], _strip_prefix(arrays, 'pq.'))
        learner.head = PlasticHead.from_snapshot(
                        meta['head'], _strip_prefix(arrays, 'head.'))
        learner.buffer = ReplayBuffer.from_bytes(
                            arrays['buffer'].tobytes(),
                            payload_dtype=learner.pq.code_dtype)
        learner.num_updates = int(meta['num_updates'])
        learner.rng = rng_from_state(meta['rng'])
        return learner


def _strip_prefix(arrays: Dict, prefix: str) -> Dict:
    return {k[len(prefix):]: v for k, v in arrays.items()
            if k.startswith(prefix)}


LEARNERS = {cls.kind: cls for cls in
            [StreamingLDA, OnlineSoftmaxReplay, RemindLite]}


def create_learner(kind: str, dim: int, params: Optional[Dict]=None,
                   seed: Optional[int]=None) -> BaseLearner:
    '''
    Build a learner by kind name

    Parameters
    ----------
    kind:
        ``'slda'``, ``'replay_softmax'`` or ``'remind'``
    dim:
        embedding dimensionality
    params:
        extra constructor parameters
    seed:
        learner seed (ignored by SLDA, which uses no randomness)
    '''
    if kind not in LEARNERS:
        raise ValueError('unknown learner {!r}, expected one of {}'.format(
                            kind, sorted(LEARNERS)))
    params = dict(params or {})
    if seed is not None and kind != StreamingLDA.kind:
        params.setdefault('seed', seed)

    return LEARNERS[kind](dim, **params)


def load_learner(path: str) -> BaseLearner:
    '''
    Restore a learner written by ``learner.save(path)``
    '''
    kind, meta, arrays = load_snapshot(path)
    if kind not in LEARNERS:
        raise ValueError('snapshot holds unknown learner {!r}'.format(kind))

    return LEARNERS[kind].from_snapshot(meta, arrays)
