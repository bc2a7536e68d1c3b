"""Shared builders for the test modules."""
import numpy as np

from rankeffect.design import Experiment


def random_experiment(rng, n, m=None, p=0, ties=False):
    m = m if m is not None else int(rng.integers(1, n))
    z = np.zeros(n, dtype=int)
    z[rng.choice(n, m, replace=False)] = 1
    y = rng.normal(size=n)
    if ties:
        y = np.round(y, 1)
    x = rng.normal(size=(n, p)) if p else None
    return Experiment(y, z, x)
