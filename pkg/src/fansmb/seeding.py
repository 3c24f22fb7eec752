"""Named random sub-streams derived from a single run seed."""
import zlib

import numpy as np

STREAMS = ("datagen", "init", "masksample", "mceval")


def stream(seed, name):
    """Independent ``Generator`` for ``(seed, name)``; stable across runs and platforms."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def child_seed(seed, name):
    """Integer seed for APIs that take ``seed: int`` rather than a generator."""
    return int(stream(seed, name).integers(0, 2**63 - 1))
