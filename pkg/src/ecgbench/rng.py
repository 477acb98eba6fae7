"""Named random sub-streams derived from a single run seed."""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name`` (e.g. "split", "init", "dropout")."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])
