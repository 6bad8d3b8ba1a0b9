"""Counter-based random streams keyed by (master seed, realization, tag).

Every realization draws from its own Philox stream, so results do not depend
on the order or process in which realizations are executed.
"""
from __future__ import annotations

import numpy as np

NETWORK = 0
SHOCK = 1


def substream(master_seed: int, realization: int, tag: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(realization), int(tag)))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
