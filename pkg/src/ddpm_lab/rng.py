"""Counter-based splittable random streams.

Every stochastic routine in the package derives its generator from a root
seed plus a tuple of non-negative integer key components.  Streams are
backed by Philox (a counter-based generator), so a stream is fully
determined by ``(seed, *key)`` and never depends on how many other streams
were consumed, in which order, or on how work is split across workers.
"""

from __future__ import annotations

import numpy as np

# Fixed top-level stream ids.  Each subsystem prefixes its keys with one of
# these so substreams can never collide across subsystems.
STREAM_TRAJECTORY = 1
STREAM_FORWARD = 2
STREAM_DIRECTION = 3
STREAM_NOISE_FLOOR = 4
STREAM_SLICE = 5
STREAM_VALIDATION = 6


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Return a Philox generator for the substream ``(seed, *key)``.

    Identical arguments always yield an identical stream.  Distinct keys
    yield statistically independent streams.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Stream for reverse-process trajectory ``index``.

    Adding trajectories never perturbs existing ones: trajectory i's noise
    depends only on (seed, i).
    """
    return make_rng(seed, STREAM_TRAJECTORY, index)
