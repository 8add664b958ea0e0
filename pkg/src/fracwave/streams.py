"""Counter-based random streams keyed by (master seed, module tag, replica index)."""

import zlib

import numpy as np


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, replica: int = 0) -> np.random.Generator:
    """Independent Philox generator for one (seed, tag, replica) triple.

    The same triple always yields the same stream regardless of how replicas
    are scheduled across workers.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_key(tag), int(replica)))
    return np.random.Generator(np.random.Philox(seq))


def streams(seed: int, tag: str, replicas) -> list:
    return [stream(seed, tag, r) for r in replicas]
