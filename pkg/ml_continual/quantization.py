'''
Product quantization: vectors are cut into ``num_subspaces`` equal
sub-blocks and every sub-block is replaced by the index of its nearest
centroid in a per-block k-means codebook.
'''

import logging
import numpy as np
from multiprocessing import Pool
from tqdm import tqdm
from typing import Dict, List
from .errors import NotFittedError


logger = logging.getLogger(__name__)

_CHUNK_ELEMENTS = 1 << 22


def squared_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    '''
    Exact ``||x - c||^2`` for every row/centroid pair, computed in
    chunks of rows to bound memory
    '''
    X = np.asarray(X, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    step = max(1, _CHUNK_ELEMENTS // max(1, centroids.size))
    out = np.empty((len(X), len(centroids)))
    for start in range(0, len(X), step):
        diff = X[start:start + step, None, :] - centroids[None, :, :]
        out[start:start + step] = (diff ** 2).sum(axis=2)

    return out


def _initial_centroids(X: np.ndarray, k: int,
                       rng: np.random.Generator) -> np.ndarray:
    distinct = np.unique(X, axis=0)
    if len(distinct) >= k:
        return distinct[rng.choice(len(distinct), size=k, replace=False)]
    # not enough distinct points: duplicate with a tiny seeded jitter
    extra = distinct[rng.integers(len(distinct), size=k - len(distinct))]
    scale = 1e-9 * max(1.0, float(np.abs(X).max()))
    extra = extra + scale * rng.standard_normal(extra.shape)

    return np.concatenate([distinct, extra])


def lloyd_kmeans(X: np.ndarray, k: int, seed, max_iters: int=25,
                 rel_tol: float=1e-4):
    '''
    Lloyd k-means with sample initialisation and empty clusters
    re-seeded to the point farthest from its centroid

    Parameters
    ----------
    X:
        ``(n, d)`` points
    k:
        number of centroids
    seed:
        seed of the initialisation
    max_iters:
        maximum number of Lloyd iterations
    rel_tol:
        stop when the relative objective improvement falls below it

    Returns
    -------
    ``(centroids, history)``, ``history`` holding the objective
    (sum of squared distances) after every assignment step
    '''
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    centroids = _initial_centroids(X, k, rng)
    history = []
    for it in range(max_iters):
        dists = squared_distances(X, centroids)
        assign = np.argmin(dists, axis=1)
        objective = float(dists[np.arange(len(X)), assign].sum())
        history.append(objective)
        if it > 0:
            prev = history[-2]
            if prev <= 0 or (prev - objective) / prev < rel_tol:
                break

        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, X)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]

        point_dists = ((X - centroids[assign]) ** 2).sum(axis=1)
        for empty in np.flatnonzero(~filled):
            far = int(np.argmax(point_dists))
            centroids[empty] = X[far]
            point_dists[far] = 0.0

    logger.debug('k-means finished after %d iterations, objective %.6g',
                 len(history), history[-1])

    return centroids, history


def _train_subspace(args):
    X, k, seed, max_iters, rel_tol = args
    return lloyd_kmeans(X, k, seed, max_iters, rel_tol)


class ProductQuantizer:
    '''
    Product quantizer with ``num_subspaces`` codebooks of
    ``codebook_size`` centroids each
    '''
    def __init__(self, num_subspaces: int=32, codebook_size: int=256,
                 max_iters: int=25, rel_tol: float=1e-4, seed: int=0,
                 n_jobs: int=1, verbose: bool=False):
        '''
        Parameters
        ----------
        num_subspaces:
            number of sub-blocks ``m``; must divide the dimensionality
        codebook_size:
            centroids per sub-block ``s``; ``s <= 256`` gives
            one byte per sub-code
        max_iters:
            Lloyd iteration limit
        rel_tol:
            relative objective improvement threshold
        seed:
            training seed, sub-block ``j`` uses ``[seed, j]``
        n_jobs:
            number of processes training sub-blocks in parallel
        verbose:
            show progress bar
        '''
        if num_subspaces < 1 or codebook_size < 1:
            raise ValueError('num_subspaces and codebook_size must be positive')
        self.num_subspaces = int(num_subspaces)
        self.codebook_size = int(codebook_size)
        self.max_iters = int(max_iters)
        self.rel_tol = float(rel_tol)
        self.seed = int(seed)
        self.n_jobs = int(n_jobs)
        self.verbose = verbose
        self.dim = None
        self.codebooks = None
        self.inertia_history_: List[List[float]] = []

    @property
    def trained(self) -> bool:
        return self.codebooks is not None

    @property
    def sub_dim(self) -> int:
        return self.dim // self.num_subspaces

    @property
    def code_dtype(self):
        return np.uint8 if self.codebook_size <= 256 else np.uint16

    @property
    def code_nbytes(self) -> int:
        return self.num_subspaces * np.dtype(self.code_dtype).itemsize

    def _check_dim(self, dim: int):
        if dim % self.num_subspaces != 0:
            raise ValueError('dim {} is not divisible by {} subspaces'.format(
                                dim, self.num_subspaces))

    def _blocks(self, X: np.ndarray):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X.reshape(len(X), self.num_subspaces, self.sub_dim)

    def fit(self, X: np.ndarray) -> 'ProductQuantizer':
        '''
        Train one codebook per sub-block

        Parameters
        ----------
        X:
            ``(n, dim)`` training vectors, ``n >= 1``
        '''
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(X) == 0:
            raise ValueError('no training vectors')
        self._check_dim(X.shape[1])
        self.dim = X.shape[1]
        blocks = self._blocks(X)
        tasks = [(blocks[:, j], self.codebook_size, [self.seed, j],
                  self.max_iters, self.rel_tol)
                 for j in range(self.num_subspaces)]
        logger.info('Training %d codebooks of size %d on %d vectors',
                    self.num_subspaces, self.codebook_size, len(X))
        if self.n_jobs > 1:
            with Pool(self.n_jobs) as p:
                results = list(tqdm(p.imap(_train_subspace, tasks),
                                    total=len(tasks),
                                    disable=not self.verbose))
        else:
            results = [_train_subspace(task) for task in
                       tqdm(tasks, disable=not self.verbose)]

        self.codebooks = np.stack([c for c, _ in results]).astype(np.float32)
        self.inertia_history_ = [h for _, h in results]

        return self

    def _check_trained(self):
        if not self.trained:
            raise NotFittedError('product quantizer is not trained')

    def encode(self, X: np.ndarray) -> np.ndarray:
        '''
        Nearest-centroid index per sub-block, lowest index on ties

        Returns
        -------
        ``(n, num_subspaces)`` codes of ``code_dtype``
        '''
        self._check_trained()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError('expected dim {}, got {}'.format(
                                self.dim, X.shape[1]))
        blocks = self._blocks(X)
        codes = np.empty((len(X), self.num_subspaces), dtype=self.code_dtype)
        for j in range(self.num_subspaces):
            dists = squared_distances(blocks[:, j], self.codebooks[j])
            codes[:, j] = np.argmin(dists, axis=1)

        return codes

    def decode(self, codes: np.ndarray) -> np.ndarray:
        '''
        Concatenation of the indexed centroids, ``(n, dim)`` float32
        '''
        self._check_trained()
        codes = np.atleast_2d(np.asarray(codes))
        if codes.shape[1] != self.num_subspaces:
            raise ValueError('expected {} sub-codes'.format(self.num_subspaces))
        if codes.size and (codes.min() < 0 or
                           codes.max() >= self.codebook_size):
            raise ValueError('code entry out of range [0, {})'.format(
                                self.codebook_size))
        parts = [self.codebooks[j][codes[:, j]]
                 for j in range(self.num_subspaces)]

        return np.concatenate(parts, axis=1)

    def reconstruction_error(self, X: np.ndarray) -> float:
        '''
        Mean over vectors of ``||v - decode(encode(v))||^2``
        '''
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(X) == 0:
            raise ValueError('no vectors to evaluate')
        recon = self.decode(self.encode(X)).astype(np.float64)

        return float(((X - recon) ** 2).sum(axis=1).mean())

    def compression_ratio(self) -> float:
        return self.dim * 4 / self.code_nbytes

    def to_snapshot(self):
        self._check_trained()
        meta = {'dim': self.dim,
                'num_subspaces': self.num_subspaces,
                'codebook_size': self.codebook_size,
                'max_iters': self.max_iters,
                'rel_tol': self.rel_tol,
                'seed': self.seed}
        return meta, {'codebooks': self.codebooks}

    @classmethod
    def from_snapshot(cls, meta: Dict, arrays: Dict) -> 'ProductQuantizer':
        pq = cls(meta['num_subspaces'], meta['codebook_size'],
                 meta['max_iters'], meta['rel_tol'], meta['seed'])
        pq.dim = meta['dim']
        pq.codebooks = arrays['codebooks'].astype(np.float32)
        return pq
