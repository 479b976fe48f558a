"""Reproducible random streams keyed by (seed, purpose, trial, ...).

Every random draw in the library comes from a counter-based Philox
generator whose key is a tuple of non-negative integers. Regenerating
from the same key always reproduces the same values, independent of how
many other streams were consumed in between, so particles, trials and
estimators can be evaluated in any order (or in parallel) without
changing results.

Block layout convention: ensemble noise for one window is drawn as a
single (steps, K, m) array from the window's key; a particle's noise
path is the k-th column of that block. Slicing a regenerated block is
what makes a per-particle stream id reproducible.
"""

from __future__ import annotations

import numpy as np

# Purpose codes used as the first key component after the root seed.
TRUTH = 1          # ground-truth state path
OBS = 2            # measurement noise
INIT = 3           # initial particle ensemble
PROPAGATION = 4    # particle transition noise, keyed further by window index
RESAMPLE = 5       # multinomial / systematic resampling draws
CONTROL_EST = 6    # rollouts of the Monte Carlo control estimator
MODELGEN = 7       # random system matrices for the dimension sweep


def generator(seed: int, *key: int) -> np.random.Generator:
    """Return the Philox generator for a stream key.

    The key is hashed through numpy's SeedSequence, which is stable
    across platforms and numpy versions.
    """
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in key])
    return np.random.Generator(np.random.Philox(seed=ss))


def normal_block(seed: int, key: tuple[int, ...], shape: tuple[int, ...],
                 scale: float = 1.0) -> np.ndarray:
    """Draw a dense block of N(0, scale^2) values for a stream key."""
    gen = generator(seed, *key)
    return gen.normal(0.0, scale, size=shape)
