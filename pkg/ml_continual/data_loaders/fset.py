'''
Loader for embedding datasets stored in the FSET binary format.

Layout of a file (all little-endian, no padding)
    | header, 20 bytes
    | ├── magic          4 bytes  ``b'FSET'``
    | ├── version        u32      1
    | ├── n_examples     u32
    | ├── dim            u32
    | └── num_classes    u32
    | records, n_examples times
    | ├── label          u32
    | └── vector         dim × f32
'''

import struct
import numpy as np
from typing import Iterable, Optional
from ..errors import FormatError
from ..utils import check_create_folder


MAGIC = b'FSET'
VERSION = 1
HEADER = struct.Struct('<4sIIII')


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([('label', '<u4'), ('vector', '<f4', (dim,))])


class FeatureDataset:
    '''
    Labeled embedding vectors. Stored order carries no meaning,
    presentation order is imposed by a
    :class:`~ml_continual.stream.StreamPlan`.
    '''
    def __init__(self, vectors: np.ndarray, labels: np.ndarray,
                 num_classes: int, dim: Optional[int]=None):
        '''
        Parameters
        ----------
        vectors:
            ``(n, dim)`` array, converted to float32
        labels:
            ``(n,)`` integer class ids in ``[0, num_classes)``
        num_classes:
            number of classes of the label space
        dim:
            dimensionality, required only when ``n == 0``
        '''
        vectors = np.asarray(vectors, dtype=np.float32)
        labels = np.asarray(labels, dtype=np.int64)
        if dim is None:
            if vectors.ndim != 2:
                raise ValueError('vectors must be a (n, dim) array')
            dim = vectors.shape[1]
        vectors = vectors.reshape(len(labels), dim)
        if dim < 1 or num_classes < 1:
            raise ValueError('dim and num_classes must be positive')
        if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
            raise ValueError('labels must lie in [0, num_classes)')
        if not np.isfinite(vectors).all():
            raise ValueError('vectors must be finite')

        self.vectors = vectors
        self.labels = labels
        self.num_classes = int(num_classes)
        self.dim = int(dim)

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (self.dim == other.dim
                and self.num_classes == other.num_classes
                and np.array_equal(self.labels, other.labels)
                and self.vectors.tobytes() == other.vectors.tobytes())

    def __repr__(self):
        return 'FeatureDataset(n={}, dim={}, num_classes={})'.format(
                    len(self), self.dim, self.num_classes)

    def classes(self) -> np.ndarray:
        '''
        Sorted class ids having at least one example
        '''
        return np.unique(self.labels)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices) -> 'FeatureDataset':
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureDataset(self.vectors[indices], self.labels[indices],
                              self.num_classes, self.dim)

    def filter_classes(self, classes: Iterable[int]) -> 'FeatureDataset':
        '''
        Examples whose label is in ``classes``, in stored order
        '''
        mask = np.isin(self.labels, np.fromiter(classes, dtype=np.int64))
        return self.subset(np.flatnonzero(mask))


def dataset_to_bytes(ds: FeatureDataset) -> bytes:
    records = np.empty(len(ds), dtype=_record_dtype(ds.dim))
    records['label'] = ds.labels
    records['vector'] = ds.vectors
    header = HEADER.pack(MAGIC, VERSION, len(ds), ds.dim, ds.num_classes)
    return header + records.tobytes()


def dataset_from_bytes(data: bytes) -> FeatureDataset:
    if len(data) < HEADER.size:
        raise FormatError('truncated header', len(data))
    magic, version, n, dim, num_classes = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError('bad magic {!r}'.format(magic), 0)
    if version != VERSION:
        raise FormatError('version mismatch: {}'.format(version), 4)
    if dim < 1:
        raise FormatError('dim must be positive', 12)
    if num_classes < 1:
        raise FormatError('num_classes must be positive', 16)

    dtype = _record_dtype(dim)
    expected = HEADER.size + n * dtype.itemsize
    if len(data) < expected:
        complete = (len(data) - HEADER.size) // dtype.itemsize
        raise FormatError('truncated payload',
                          HEADER.size + complete * dtype.itemsize)
    if len(data) > expected:
        raise FormatError('trailing bytes', expected)

    records = np.frombuffer(data, dtype=dtype, count=n, offset=HEADER.size)
    labels = records['label'].astype(np.int64)
    bad = np.flatnonzero(labels >= num_classes)
    if len(bad):
        raise FormatError('label {} >= num_classes {}'.format(
                            labels[bad[0]], num_classes),
                          HEADER.size + bad[0] * dtype.itemsize)
    vectors = records['vector'].reshape(n, dim)
    finite = np.isfinite(vectors)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise FormatError('non-finite float',
                          HEADER.size + row * dtype.itemsize + 4 + col * 4)

    return FeatureDataset(vectors.copy(), labels, num_classes, dim)


def load_dataset(path: str) -> FeatureDataset:
    '''
    Read an FSET file

    Parameters
    ----------
    path:
        path to ``.fset`` file

    Returns
    -------
    :class:`FeatureDataset`
        dataset with header-declared ``dim`` and ``num_classes``
    '''
    with open(path, 'rb') as f:
        data = f.read()

    return dataset_from_bytes(data)


def save_dataset(ds: FeatureDataset, path: str):
    '''
    Write dataset in FSET format. ``load_dataset(path)`` gives
    back a bit-identical dataset.

    Parameters
    ----------
    ds:
        dataset to save
    path:
        destination file path
    '''
    check_create_folder(path)
    with open(path, 'wb') as f:
        f.write(dataset_to_bytes(ds))
