import numpy as np


# Stream tags keeping the draws of different purposes apart.
PATH_STREAM = 0
EVENT_STREAM = 1
LABEL_STREAM = 2


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Philox generator keyed by (seed, *keys).

    Counter-based, so streams are reproducible across platforms, and
    distinct keys (replication, session, purpose) give independent streams.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)]))
    )
