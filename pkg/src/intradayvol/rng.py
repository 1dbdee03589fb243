"""Counter-based random streams.

Every stream is a Philox generator keyed from a ``SeedSequence``, so a seed
plus a spawn key identifies a stream independent of how many draws other
streams consumed.  Parallel chains and replications spawn children instead
of sharing a generator.
"""

import numpy as np


def make_rng(seed):
    """Return a Philox-backed ``Generator`` for ``seed``.

    ``seed`` may be an int, a ``SeedSequence`` or an existing ``Generator``
    (returned unchanged).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def spawn(seed, n):
    """Return ``n`` independent generators derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [make_rng(child) for child in ss.spawn(n)]
