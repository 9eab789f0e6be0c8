'''
Seeded Gaussian class clusters standing in for CNN embeddings.
Class ``k`` is centred at ``class_separation * u_k`` with ``u_k``
a seeded random unit vector; samples add isotropic noise.
'''

import numpy as np
from dataclasses import dataclass
from .fset import FeatureDataset


TRAIN_STREAM = 0
EVAL_STREAM = 1


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int
    dim: int
    examples_per_class: int
    class_separation: float = 4.0
    noise_scale: float = 1.0
    seed: int = 0

    def validate(self):
        for name in ['num_classes', 'dim', 'examples_per_class']:
            if getattr(self, name) < 1:
                raise ValueError('{} must be positive'.format(name))
        if self.class_separation <= 0:
            raise ValueError('class_separation must be positive')
        if self.noise_scale < 0:
            raise ValueError('noise_scale must be non-negative')
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError('seed must be a 64-bit unsigned integer')


def class_means(spec: SyntheticSpec) -> np.ndarray:
    '''
    True class means, ``(num_classes, dim)`` float64 array
    '''
    rng = np.random.default_rng(spec.seed)
    directions = rng.standard_normal((spec.num_classes, spec.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    return spec.class_separation * directions


def gen_synthetic_gaussian(spec: SyntheticSpec,
                           stream: int=TRAIN_STREAM,
                           examples_per_class: int=None) -> FeatureDataset:
    '''
    Generate a dataset. Identical arguments give a bit-identical dataset.

    Parameters
    ----------
    spec:
        generator parameters
    stream:
        id of the noise stream. Datasets drawn with different streams
        share the class means, so ``EVAL_STREAM`` gives a held-out set
    examples_per_class:
        overrides ``spec.examples_per_class``

    Returns
    -------
    :class:`~ml_continual.data_loaders.fset.FeatureDataset`
    '''
    spec.validate()
    per_class = spec.examples_per_class if examples_per_class is None \
                else examples_per_class
    means = class_means(spec)
    rng = np.random.default_rng([spec.seed, stream])
    labels = np.repeat(np.arange(spec.num_classes), per_class)
    noise = rng.standard_normal((len(labels), spec.dim))
    vectors = means[labels] + spec.noise_scale * noise

    return FeatureDataset(vectors.astype(np.float32), labels,
                          spec.num_classes, spec.dim)
