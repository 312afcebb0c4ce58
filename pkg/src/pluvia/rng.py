"""Deterministic random number generation.

Every stochastic routine in the package draws its noise here so that a
master seed fixes the output bit for bit, independent of library
version.  The scheme, which downstream metadata records under the name
in ``GENERATOR_ALGORITHM``, is:

* bit source: PCG64 (O'Neill's permuted congruential generator, the
  numpy implementation), consumed through ``random_raw`` so only the
  documented 64-bit output stream is relied on, never numpy's
  distribution methods;
* uniforms: the top 53 bits of each word, centered,
  ``u = (word >> 11 + 0.5) / 2**53``, which lies strictly inside (0, 1);
* standard normals: the AS 241 inverse-CDF transform applied to those
  uniforms (see ``special.normal_quantile``).

Derived seeds come from ``numpy.random.SeedSequence`` spawn keys, which
gives an injective map from (master seed, purpose key) to child streams.
Purpose keys are small tuples of non-negative ints; each module
documents the keys it uses.  Noise arrays are always drawn in one call
in C order (time-major for panels), so the mapping from seed to noise
is part of the package contract rather than an implementation accident.
"""

import numpy as np

from .special import normal_quantile

GENERATOR_ALGORITHM = "pcg64-centered53-as241-v1"

_TWO_POW_NEG53 = 2.0**-53


def seed_sequence(master_seed, key=()):
    """Build the SeedSequence for a purpose key under a master seed.

    key is a tuple of non-negative ints identifying the consumer
    (stream purpose, replica index, ...).  Distinct keys give
    statistically independent streams; the same (master_seed, key)
    always gives the same stream.
    """
    key = tuple(int(k) for k in key)
    if any(k < 0 for k in key):
        raise ValueError("seed key entries must be non-negative")
    return np.random.SeedSequence(int(master_seed), spawn_key=key)


def _bit_generator(seed):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.PCG64(seed)
    return np.random.PCG64(np.random.SeedSequence(int(seed)))


def uniforms(seed, shape):
    """Uniform (0, 1) variates, drawn in C order from the bit stream."""
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = _bit_generator(seed).random_raw(n)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_NEG53
    return u.reshape(shape)


def standard_normals(seed, shape):
    """Standard normal variates via the inverse-CDF transform.

    The uniforms are strictly inside (0, 1) so the quantile transform
    never produces an infinity.
    """
    return normal_quantile(uniforms(seed, shape))
