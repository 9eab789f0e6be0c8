'''
Pre-train/continual class split and presentation order of the online
pass. Learners see examples one by one in ``StreamPlan.order`` and
never revisit them.
'''

import numpy as np
from dataclasses import dataclass, field
from typing import List, Tuple, Iterable
from .data_loaders.fset import FeatureDataset
from .utils import check_create_folder


CLASS_INCREMENTAL = 'class_incremental'
IID = 'iid'


@dataclass(frozen=True)
class SplitSpec:
    pretrain_num_classes: int
    seed: int = 0


@dataclass
class StreamPlan:
    '''
    ``checkpoints`` holds ``(position, seen)`` pairs: after ``position``
    examples of ``order`` have been presented, ``seen`` classes
    (class-incremental) or examples (iid) have been seen.
    '''
    order: np.ndarray
    checkpoints: List[Tuple[int, int]] = field(default_factory=list)
    mode: str = CLASS_INCREMENTAL

    def __len__(self):
        return len(self.order)


def select_pretrain_classes(num_classes: int, spec: SplitSpec,
                            allow_all: bool=False):
    '''
    Randomly pick the pre-train classes

    Parameters
    ----------
    num_classes:
        total number of classes
    spec:
        split parameters
    allow_all:
        accept ``pretrain_num_classes == num_classes``
        (empty continual set)

    Returns
    -------
    ``(pretrain_classes, continual_classes)``
        disjoint sorted arrays covering ``range(num_classes)``
    '''
    count = spec.pretrain_num_classes
    limit = num_classes if allow_all else num_classes - 1
    if count < 1 or count > limit:
        raise ValueError(
            'pretrain_num_classes={} must be in [1, {}] for {} classes'.format(
                count, limit, num_classes))
    perm = np.random.default_rng(spec.seed).permutation(num_classes)
    pretrain = np.sort(perm[:count])
    continual = np.sort(perm[count:])

    return pretrain, continual


def build_class_incremental_stream(ds: FeatureDataset,
                                   pretrain_classes: Iterable[int],
                                   seed: int,
                                   checkpoint_every: int) -> StreamPlan:
    '''
    Class-ordered stream: the pre-train class blocks come first, then the
    continual ones. Class order inside each group and example order inside
    each class are seeded shuffles.

    Parameters
    ----------
    ds:
        dataset to stream
    pretrain_classes:
        subset of classes present in ``ds``
    seed:
        shuffling seed
    checkpoint_every:
        record a checkpoint after every ``checkpoint_every``
        completed classes and at the end of the stream
    '''
    if checkpoint_every <= 0:
        raise ValueError('checkpoint_every must be positive')
    present = ds.classes()
    pretrain = np.unique(np.asarray(list(pretrain_classes), dtype=np.int64))
    if not np.isin(pretrain, present).all():
        raise ValueError('pretrain classes must be present in the dataset')
    continual = np.setdiff1d(present, pretrain)

    rng = np.random.default_rng(seed)
    class_order = np.concatenate([rng.permutation(pretrain),
                                  rng.permutation(continual)])
    blocks = []
    checkpoints = []
    position = 0
    for seen, cls in enumerate(class_order, start=1):
        idxs = rng.permutation(np.flatnonzero(ds.labels == cls))
        blocks.append(idxs)
        position += len(idxs)
        if seen % checkpoint_every == 0 or seen == len(class_order):
            checkpoints.append((position, seen))

    order = np.concatenate(blocks) if blocks else np.zeros(0, dtype=np.int64)

    return StreamPlan(order.astype(np.int64), checkpoints, CLASS_INCREMENTAL)


def build_iid_stream(ds: FeatureDataset, seed: int,
                     checkpoint_every_examples: int) -> StreamPlan:
    '''
    Fully shuffled stream with a checkpoint every
    ``checkpoint_every_examples`` examples and at the end
    '''
    if checkpoint_every_examples <= 0:
        raise ValueError('checkpoint_every_examples must be positive')
    order = np.random.default_rng(seed).permutation(len(ds))
    positions = list(range(checkpoint_every_examples, len(ds) + 1,
                           checkpoint_every_examples))
    if len(ds) and (not positions or positions[-1] != len(ds)):
        positions.append(len(ds))

    return StreamPlan(order.astype(np.int64),
                      [(p, p) for p in positions], IID)


def is_permutation(plan: StreamPlan, n: int) -> bool:
    return np.array_equal(np.sort(plan.order), np.arange(n))


def is_class_contiguous(labels: np.ndarray) -> bool:
    '''
    True if every label occupies one contiguous block of the sequence
    '''
    labels = np.asarray(labels)
    if len(labels) == 0:
        return True
    starts = np.concatenate([[True], labels[1:] != labels[:-1]])
    block_labels = labels[starts]
    return len(block_labels) == len(np.unique(block_labels))


def save_plan(plan: StreamPlan, path: str):
    '''
    Text dump: one index per line, ``#checkpoint <seen>`` after
    the index at which a checkpoint is reached
    '''
    marks = {}
    for position, seen in plan.checkpoints:
        marks[position] = seen
    lines = ['#mode {}'.format(plan.mode)]
    if 0 in marks:
        lines.append('#checkpoint {}'.format(marks[0]))
    for k, idx in enumerate(plan.order, start=1):
        lines.append(str(int(idx)))
        if k in marks:
            lines.append('#checkpoint {}'.format(marks[k]))
    check_create_folder(path)
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')


def load_plan(path: str) -> StreamPlan:
    order = []
    checkpoints = []
    mode = CLASS_INCREMENTAL
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith('#mode'):
                mode = line.split()[1]
            elif line.startswith('#checkpoint'):
                checkpoints.append((len(order), int(line.split()[1])))
            else:
                order.append(int(line))

    return StreamPlan(np.array(order, dtype=np.int64), checkpoints, mode)
