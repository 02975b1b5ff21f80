"""Counter-based random streams keyed by (master seed, experiment, task index).

Every task draws from its own Philox stream, so results do not depend on
how tasks are split across workers.
"""

from __future__ import annotations

import zlib

import numpy as np

RNG_ID = "numpy.random.Philox(SeedSequence(seed, spawn_key=(crc32(experiment), *index)))"


def stream(seed: int, experiment: str, *index: int) -> np.random.Generator:
    """Independent generator for one task."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = (zlib.crc32(experiment.encode("utf-8")),) + tuple(int(i) for i in index)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))
