"""Reproducible random substreams.

One 64-bit master seed fans out to independent ``numpy`` Philox generators
(a counter-based bit generator) keyed by a path of integers, e.g.
``(run, STREAM_MEASUREMENT, sensor)``. Keys are derived with the SplitMix64
finalizer so the derivation is fixed and documented:

    key_0 = mix64(master_seed)
    key_{m+1} = mix64(key_m ^ (path[m] + 0x9E3779B97F4A7C15))

The final key feeds ``Philox(key=...)``; two different paths give distinct
keys and hence non-overlapping streams.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

STREAM_PROCESS = 0
STREAM_MEASUREMENT = 1
STREAM_PERTURBATION = 2
STREAM_PRIVACY = 3
STREAM_MISC = 4


def mix64(z):
    """SplitMix64 finalizer on a Python int, returning a 64-bit int."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_key(master_seed, *path):
    key = mix64(int(master_seed) & MASK64)
    for p in path:
        key = mix64(key ^ ((int(p) + GOLDEN) & MASK64))
    return key


def substream(master_seed, *path):
    """A fresh ``numpy.random.Generator`` for the given substream path."""
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *path)))


def as_generator(rng):
    """Accept a Generator, an int seed, or None and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return substream(int(rng))


def gaussian(rng, cov, size=None):
    """Draw zero-mean Gaussian vectors with covariance ``cov`` (PSD allowed).

    Uses the symmetric square root, so singular covariances are fine.
    Returns shape ``(n,)`` when ``size`` is None, else ``(size, n)``.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = cov.shape[0]
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    if size is None:
        return root @ rng.standard_normal(n)
    z = rng.standard_normal((size, n))
    return z @ root.T
